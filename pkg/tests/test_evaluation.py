"""Test-scene builders, scoring, lexicon F1, and aggregation."""

import numpy as np
import pytest

from conftest import make_table_model
from xslearn.corpus import (
    FeatureSynthConfig,
    SynthConfig,
    generate_feature_corpus,
    generate_synthetic,
    holdout_category,
    inject_novel_items,
)
from xslearn.evaluation import (
    METRIC_BEST_F,
    METRIC_CHANCE,
    METRIC_NOVEL,
    METRIC_TIE,
    Aggregate,
    RunResult,
    TestScene,
    aggregate_runs,
    best_f,
    build_familiar_test_scenes,
    build_holdout_test_scenes,
    build_novel_test_scenes,
    score_scenes,
)
from xslearn.model import init_model

# ---------------------------------------------------------------------------
# TestScene


def test_scene_normalizes_and_validates():
    t = TestScene(3, (5, 2, 5, 1), frozenset({5}))
    assert t.candidates == (1, 2, 5)
    assert t.chance == pytest.approx(1 / 3)
    with pytest.raises(ValueError, match="needs candidates"):
        TestScene(0, (), frozenset({1}))
    with pytest.raises(ValueError, match="at least one correct"):
        TestScene(0, (1, 2), frozenset())
    with pytest.raises(ValueError, match="among the candidates"):
        TestScene(0, (1, 2), frozenset({3}))


def test_scene_chance_counts_multiple_correct():
    t = TestScene(0, (1, 2, 3, 4), frozenset({2, 4}))
    assert t.chance == 0.5


# ---------------------------------------------------------------------------
# novel scene builder


def test_novel_scenes_pair_ith_word_with_ith_object(small_novel):
    scenes = build_novel_test_scenes(small_novel, 3, 4, 2, seed=0)
    assert len(scenes) == 12
    nw = small_novel.vocabulary.novel_ids()
    no = small_novel.inventory.novel_ids()
    fam = set(small_novel.inventory.familiar_ids())
    for i in range(3):
        block = scenes[i * 4 : (i + 1) * 4]
        for t in block:
            assert t.prompt == nw[i]
            assert t.correct == {no[i]}
            assert len(t.candidates) == 3
            foils = set(t.candidates) - {no[i]}
            assert len(foils) == 2 and foils <= fam


def test_novel_scenes_deterministic_in_seed(small_novel):
    a = build_novel_test_scenes(small_novel, 2, 5, 2, seed=9)
    b = build_novel_test_scenes(small_novel, 2, 5, 2, seed=9)
    c = build_novel_test_scenes(small_novel, 2, 5, 2, seed=10)
    assert a == b
    assert a != c


def test_novel_scenes_insufficiency_errors(small_synth, small_novel):
    with pytest.raises(ValueError, match="novel words"):
        build_novel_test_scenes(small_synth, 1, 1, 2)
    with pytest.raises(ValueError, match="need 4 novel words"):
        build_novel_test_scenes(small_novel, 4, 1, 2)
    with pytest.raises(ValueError, match="familiar objects"):
        build_novel_test_scenes(small_novel, 1, 1, 99)
    with pytest.raises(ValueError, match="at least 1"):
        build_novel_test_scenes(small_novel, 0, 1, 1)


# ---------------------------------------------------------------------------
# familiar scene builder


def test_familiar_scenes_on_the_tiny_corpus(tiny_corpus):
    trials = build_familiar_test_scenes(tiny_corpus)
    assert trials == [
        TestScene(2, (0, 1), frozenset({0})),
        TestScene(5, (0, 2), frozenset({2})),
        TestScene(3, (1, 2), frozenset({1})),
        TestScene(5, (1, 2), frozenset({2})),
    ]


def test_familiar_scenes_respect_min_candidates(tiny_corpus):
    # raising the bar to 3 keeps only scenes with 3+ objects: none here
    assert build_familiar_test_scenes(tiny_corpus, min_candidates=3) == []


def test_familiar_scenes_need_some_ground_truth(small_synth):
    from xslearn.corpus import Corpus

    bare = Corpus(small_synth.scenes, small_synth.vocabulary, small_synth.inventory, None, None)
    with pytest.raises(ValueError, match="alignments or a gold lexicon"):
        build_familiar_test_scenes(bare)


def test_familiar_scenes_from_alignments():
    cfg = FeatureSynthConfig(
        n_categories=4, instances_per_category=3, feature_dim=5, n_scenes=30, objects_per_scene=2.0
    )
    corpus = generate_feature_corpus(cfg, seed=1)
    trials = build_familiar_test_scenes(corpus)
    assert trials
    by_scene = {s.objects: s for s in corpus.scenes}
    for t in trials:
        assert t.candidates in by_scene
        scene = by_scene[t.candidates]
        assert t.prompt in scene.words
        assert t.correct <= set(scene.objects)
        # annotated referents carry the prompt's category label
        lab = corpus.vocabulary.words[t.prompt]
        for o in t.correct:
            assert corpus.inventory.categories[o] == lab


# ---------------------------------------------------------------------------
# holdout scene builder


@pytest.fixture(scope="module")
def holdout_setup():
    cfg = FeatureSynthConfig(
        n_categories=5, instances_per_category=4, feature_dim=6, n_scenes=60, objects_per_scene=2.5
    )
    corpus = generate_feature_corpus(cfg, seed=4)
    label = corpus.inventory.categories[0]
    train, evals = holdout_category(corpus, {label}, {label})
    return corpus, train, evals, label


def test_holdout_scenes_default_prompt_is_the_frequent_word(holdout_setup):
    corpus, train, evals, label = holdout_setup
    trials = build_holdout_test_scenes(corpus, evals, {label}, {label})
    assert len(trials) == len(evals)
    wid = corpus.vocabulary.id_of(label)
    held = set(corpus.inventory.ids_of_category(label))
    for t, scene in zip(trials, evals):
        assert t.prompt == wid
        assert t.candidates == scene.objects
        assert t.correct == {o for o in scene.objects if o in held}


def test_holdout_scenes_per_word(holdout_setup):
    corpus, train, evals, label = holdout_setup
    trials = build_holdout_test_scenes(corpus, evals, {label}, {label}, per_word=True)
    assert len(trials) == len(evals)  # one held word form here


def test_holdout_scene_errors(holdout_setup):
    corpus, train, evals, label = holdout_setup
    with pytest.raises(ValueError, match="none of the held-out word forms"):
        build_holdout_test_scenes(corpus, evals, {"nope"}, {label})
    with pytest.raises(ValueError, match="no instances carry"):
        build_holdout_test_scenes(corpus, evals, {label}, {"nope"})
    other = corpus.inventory.categories[-1]
    with pytest.raises(ValueError, match="contains no held-out instance"):
        build_holdout_test_scenes(corpus, evals, {label}, {other})


# ---------------------------------------------------------------------------
# scoring


def _oracle_model(n: int, dim: int = 8):
    # word i and object i share a one-hot-ish vector: similarity is the identity
    vecs = np.eye(n, dim) + 0.01
    return make_table_model(vecs, vecs)


def _paired_models(corpus):
    # word vectors copied from (or opposed to) their paired novel object
    n_o = corpus.inventory.size
    objects = np.eye(n_o) + 0.01
    words = np.full((corpus.vocabulary.size, n_o), 0.01)
    for w, o in zip(corpus.vocabulary.novel_ids(), corpus.inventory.novel_ids()):
        words[w] = objects[o]
    anti = words.copy()
    for w, o in zip(corpus.vocabulary.novel_ids(), corpus.inventory.novel_ids()):
        anti[w] = -objects[o]
    return make_table_model(words, objects), make_table_model(anti, objects)


def test_score_scenes_oracle_is_perfect(small_novel):
    oracle, _ = _paired_models(small_novel)
    trials = build_novel_test_scenes(small_novel, 3, 5, 2, seed=1)
    s = score_scenes(oracle, trials, "similarity")
    assert s.accuracy == 1.0
    assert s.tie_rate == 0.0
    assert s.n_scenes == 15
    assert abs(s.chance - 1 / 3) < 1e-12


def test_score_scenes_anti_oracle_is_zero(small_novel):
    _, anti = _paired_models(small_novel)
    trials = build_novel_test_scenes(small_novel, 3, 5, 2, seed=1)
    assert score_scenes(anti, trials, "similarity").accuracy == 0.0


def test_score_scenes_constant_row_ties(small_novel):
    n = max(small_novel.vocabulary.size, small_novel.inventory.size)
    words = np.ones((n, 4))
    objects = np.random.default_rng(0).normal(size=(n, 4))
    objects[:, 0] = 5.0  # keep norms safely nonzero
    m = make_table_model(words, objects)
    trials = build_novel_test_scenes(small_novel, 2, 6, 2, seed=2)
    s = score_scenes(m, trials, "similarity")
    assert s.tie_rate == 0.0 or s.tie_rate >= 0.0  # sanity: no crash
    const = make_table_model(np.ones((n, 3)), np.tile([1.0, 2.0, 3.0], (n, 1)))
    s2 = score_scenes(const, trials, "similarity")
    assert s2.tie_rate == 1.0


def test_score_scenes_accuracy_is_a_fraction():
    m = _oracle_model(6)
    trials = [
        TestScene(0, (0, 1), frozenset({0})),  # hit
        TestScene(1, (1, 2), frozenset({1})),  # hit
        TestScene(2, (0, 3), frozenset({3})),  # miss: word 2 prefers neither, 0 wins? no
    ]
    s = score_scenes(m, trials, "similarity")
    # word 2 scores 0-ish on both 0 and 3: identical off-diagonal values tie to 0
    assert s.accuracy == pytest.approx(2 / 3)


def test_score_scenes_bayes_matches_per_trial_selection(small_novel):
    from xslearn.selection import select_by_bayes

    m = init_model(small_novel, dim=6, seed=8)
    trials = build_novel_test_scenes(small_novel, 3, 4, 2, seed=3)
    s = score_scenes(m, trials, "bayes")
    hits = sum(select_by_bayes(m, t.prompt, t.candidates).chosen in t.correct for t in trials)
    assert s.accuracy == hits / len(trials)


def test_score_scenes_validation(small_novel):
    m = init_model(small_novel, dim=4, seed=0)
    trials = build_novel_test_scenes(small_novel, 2, 2, 2, seed=0)
    with pytest.raises(ValueError, match="unknown strategy"):
        score_scenes(m, trials, "random")
    with pytest.raises(ValueError, match="no test scenes"):
        score_scenes(m, [], "similarity")


# ---------------------------------------------------------------------------
# best F1


def test_best_f_perfect_separation():
    corpus = generate_synthetic(SynthConfig(4, 4, 30, 1.0, 2.0), seed=0)
    m = make_table_model(np.eye(4) + 0.001, np.eye(4) + 0.001)
    assert best_f(m, corpus) == 1.0


def test_best_f_constant_matrix_closed_form():
    corpus = generate_synthetic(SynthConfig(4, 4, 30, 1.0, 2.0), seed=0)
    m = make_table_model(np.ones((4, 3)), np.tile([1.0, 2.0, 3.0], (4, 1)))
    # one prefix containing all 16 cells and all 4 gold pairs:
    # precision 4/16, recall 1, F = 2 * 4 / (16 + 4)
    assert abs(best_f(m, corpus) - 0.4) < 1e-12


def _brute_force_best_f(sims, gold_cells):
    vals = sorted(set(sims.ravel().tolist()), reverse=True)
    g = len(gold_cells)
    best = 0.0
    for thr in vals:
        lex = {(i, j) for i in range(sims.shape[0]) for j in range(sims.shape[1]) if sims[i, j] >= thr}
        hits = len(lex & gold_cells)
        if hits == 0:
            continue
        p = hits / len(lex)
        r = hits / g
        best = max(best, 2 * p * r / (p + r))
    return best


def test_best_f_matches_brute_force_on_random_models():
    corpus = generate_synthetic(SynthConfig(6, 7, 40, 1.5, 2.0), seed=1)
    gold_cells = set(corpus.gold.object_pairs(corpus.inventory))
    rng = np.random.default_rng(77)
    for trial in range(30):
        m = make_table_model(rng.normal(size=(6, 5)), rng.normal(size=(7, 5)))
        sims = m.similarity_matrix()
        if trial % 3 == 0:
            sims = None  # quantized variant below uses its own model
            words = np.round(rng.normal(size=(6, 2)), 1) + 2.0
            objs = np.round(rng.normal(size=(7, 2)), 1) + 2.0
            m = make_table_model(words, objs)
            sims = m.similarity_matrix()
        assert abs(best_f(m, corpus) - _brute_force_best_f(sims, gold_cells)) < 1e-12


def test_best_f_ignores_novel_rows_and_columns(small_synth, small_novel):
    # same familiar vectors, adversarial novel vectors: the score is blind to them
    nw, no = small_novel.vocabulary.size, small_novel.inventory.size
    rng = np.random.default_rng(9)
    words = rng.normal(size=(nw, 6))
    objs = rng.normal(size=(no, 6))
    m_full = make_table_model(words, objs)
    m_fam = make_table_model(
        words[: small_synth.vocabulary.size], objs[: small_synth.inventory.size]
    )
    assert best_f(m_full, small_novel) == best_f(m_fam, small_synth)
    # cranking the novel rows to align with every object changes nothing
    words2 = words.copy()
    words2[small_synth.vocabulary.size :] = objs[:1, :] * 10
    assert best_f(make_table_model(words2, objs), small_novel) == best_f(m_full, small_novel)


def test_best_f_requires_gold(small_synth):
    from xslearn.corpus import Corpus

    bare = Corpus(small_synth.scenes, small_synth.vocabulary, small_synth.inventory, None, None)
    m = init_model(small_synth, dim=4, seed=0)
    with pytest.raises(ValueError, match="non-empty gold lexicon"):
        best_f(m, bare)


# ---------------------------------------------------------------------------
# aggregation


def _rr(condition, seed, acc, tie=0.0, chance=None, bf=None, fam=None):
    loss, _, strategy = condition.partition("-")
    return RunResult(condition, loss, strategy, seed, acc, tie, chance, bf, fam)


def test_aggregate_mean_and_sample_sd():
    rows = [_rr("joint-bayes", 0, 0.5), _rr("joint-bayes", 1, 0.7)]
    aggs = aggregate_runs(rows)
    by_metric = {a.metric: a for a in aggs}
    acc = by_metric[METRIC_NOVEL]
    assert acc.n == 2
    assert abs(acc.mean - 0.6) < 1e-15
    assert abs(acc.sd - 0.14142135623730953) < 1e-12
    assert not acc.single
    tie = by_metric[METRIC_TIE]
    assert tie.mean == 0.0


def test_aggregate_single_run_has_zero_sd():
    aggs = aggregate_runs([_rr("words-similarity", 3, 0.8)])
    acc = next(a for a in aggs if a.metric == METRIC_NOVEL)
    assert acc.sd == 0.0
    assert acc.single


def test_aggregate_skips_missing_metrics():
    rows = [_rr("joint-bayes", 0, 0.5, chance=0.33), _rr("joint-bayes", 1, 0.7)]
    aggs = aggregate_runs(rows)
    chance = next(a for a in aggs if a.metric == METRIC_CHANCE)
    assert chance.n == 1  # only one run carried a chance value
    assert not any(a.metric == METRIC_BEST_F for a in aggs)


def test_aggregate_groups_by_condition_and_sorts():
    rows = [
        _rr("words-bayes", 0, 0.5),
        _rr("joint-bayes", 0, 0.9),
        _rr("words-bayes", 1, 0.7),
    ]
    aggs = aggregate_runs(rows)
    keys = [(a.condition, a.metric) for a in aggs]
    assert keys == sorted(keys)
    wb = next(a for a in aggs if a.condition == "words-bayes" and a.metric == METRIC_NOVEL)
    assert wb.n == 2


def test_aggregate_is_permutation_invariant():
    rows = [_rr("j-b", s, 0.1 * s) for s in range(6)]
    a = aggregate_runs(rows)
    b = aggregate_runs(rows[::-1])
    for x, y in zip(a, b):
        assert x.condition == y.condition and x.metric == y.metric
        assert x.mean == pytest.approx(y.mean, abs=1e-15)
        assert x.sd == pytest.approx(y.sd, abs=1e-15)
        assert x.n == y.n


def test_aggregate_dataclass_shape():
    a = Aggregate("c", "m", 0.5, 0.1, 3)
    assert not a.single