"""Corpus structures, the two file formats, generators, novelty handling."""

import json

import numpy as np
import pytest

from xslearn.corpus import (
    Corpus,
    CorpusFormatError,
    FeatureSynthConfig,
    ObjectInventory,
    Scene,
    SynthConfig,
    Vocabulary,
    generate_feature_corpus,
    generate_synthetic,
    holdout_category,
    inject_novel_items,
    load_symbolic,
    load_visual,
    pair_arrays,
    pair_expand,
    save_symbolic,
    save_visual,
    token_weights,
)


# ---------------------------------------------------------------------------
# scenes and pair expansion


def test_scene_dedupes_and_sorts():
    s = Scene((3, 1, 3, 2), (5, 5, 0))
    assert s.words == (1, 2, 3)
    assert s.objects == (0, 5)


def test_scene_rejects_empty_sides():
    with pytest.raises(ValueError, match="at least one word"):
        Scene((), (1,))
    with pytest.raises(ValueError, match="at least one object"):
        Scene((1,), ())


@pytest.mark.parametrize(
    "n_words,n_objects,expected", [(3, 2, 6), (1, 1, 1), (4, 3, 12)]
)
def test_pair_expand_is_the_cross_product(n_words, n_objects, expected):
    s = Scene(tuple(range(n_words)), tuple(range(n_objects)))
    pairs = pair_expand(s)
    assert len(pairs) == expected
    assert pairs == frozenset((w, o) for w in range(n_words) for o in range(n_objects))


# ---------------------------------------------------------------------------
# the symbolic format


def test_parse_single_scene(tmp_path):
    p = tmp_path / "one.txt"
    p.write_text("get the piggie | PIG COW\n")
    c = load_symbolic(p)
    assert c.vocabulary.words == ("get", "the", "piggie")
    assert c.inventory.names == ("PIG", "COW")
    assert c.scenes == (Scene((0, 1, 2), (0, 1)),)
    assert c.gold is None


def test_tiny_corpus_structure(tiny_corpus):
    c = tiny_corpus
    assert c.vocabulary.words == ("get", "the", "piggie", "cow", "see", "doggie", "and")
    assert c.inventory.names == ("PIG", "COW", "DOG")
    assert c.vocabulary.frequency == (1, 4, 2, 2, 1, 2, 1)
    assert c.inventory.frequency == (3, 3, 2)
    assert c.gold.entries == frozenset({(2, 0), (3, 1), (5, 2)})
    assert c.stats().n_pairs == 23
    assert c.stats().n_scenes == 5


def test_token_weights_are_inverse_frequencies(tiny_corpus):
    assert token_weights(tiny_corpus) == {
        0: 1.0, 1: 0.25, 2: 0.5, 3: 0.5, 4: 1.0, 5: 0.5, 6: 1.0
    }


def test_pair_arrays_order_and_scene_index(tiny_corpus):
    pw, po, ps = pair_arrays(tiny_corpus)
    assert pw.dtype == np.int64 and po.dtype == np.int64
    assert len(pw) == 23
    # first scene: words (0,1,2) x objects (0,1), sorted-ID order
    assert pw[:6].tolist() == [0, 0, 1, 1, 2, 2]
    assert po[:6].tolist() == [0, 1, 0, 1, 0, 1]
    assert ps[:6].tolist() == [0] * 6
    assert ps[-1] == 4


def test_symbolic_round_trip(tiny_corpus, tmp_path):
    p = tmp_path / "round.txt"
    save_symbolic(tiny_corpus, p)
    assert load_symbolic(p) == tiny_corpus


@pytest.mark.parametrize(
    "text,message",
    [
        ("get the piggie PIG COW\n", "line 1.*exactly one"),
        ("a | X\nb | Y | Z\n", "line 2.*exactly one"),
        ("| PIG\n", "line 1.*no words"),
        ("get |\n", "line 1.*no objects"),
        ("#note hello\na | X\n", "line 1.*unrecognized header"),
        ("a | X\n#gold a=X\n", "line 2.*after the first scene"),
        ("#gold nope=X\na | X\n", "unknown word 'nope'"),
        ("#gold a=NOPE\na | X\n", "unknown object 'NOPE'"),
        ("", "no scenes"),
        ("\n\n", "no scenes"),
    ],
)
def test_symbolic_parse_errors(tmp_path, text, message):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(CorpusFormatError, match=message):
        load_symbolic(p)


def test_save_symbolic_refuses_novel_items(tiny_corpus, tmp_path):
    grown = inject_novel_items(tiny_corpus, 1, 1)
    with pytest.raises(ValueError, match="novel"):
        save_symbolic(grown, tmp_path / "x.txt")


# ---------------------------------------------------------------------------
# corpus validation


def test_corpus_recounts_frequencies():
    scenes = (Scene((0,), (0,)), Scene((0, 1), (0,)))
    vocab_bad = Vocabulary(("a", "b"), (1, 1))  # 'a' really occurs twice
    inv = ObjectInventory(("X",), (2,))
    with pytest.raises(ValueError, match="frequencies do not match"):
        Corpus(scenes, vocab_bad, inv)
    Corpus(scenes, Vocabulary(("a", "b"), (2, 1)), inv)  # corrected counts pass


def test_corpus_rejects_out_of_range_ids():
    with pytest.raises(ValueError, match="out of range"):
        Corpus((Scene((0, 7), (0,)),), Vocabulary(("a",), (1,)), ObjectInventory(("X",), (1,)))


def test_alignments_must_point_inside_their_scene():
    scenes = (Scene((0,), (0, 1)),)
    vocab = Vocabulary(("a",), (1,))
    inv = ObjectInventory(("X", "Y"), (1, 1))
    Corpus(scenes, vocab, inv, alignments=(((0, 1),),))
    with pytest.raises(ValueError, match="outside its scene"):
        Corpus(scenes, vocab, inv, alignments=(((0, 5),),))


# ---------------------------------------------------------------------------
# the synthetic generator


def test_synthetic_statistics_near_targets():
    cfg = SynthConfig(
        n_words=36, n_objects=22, n_scenes=620, words_per_scene=4.1, objects_per_scene=2.4
    )
    c = generate_synthetic(cfg, seed=12)
    s = c.stats()
    assert s.n_scenes == 620
    assert s.n_words >= 0.95 * 36
    assert s.n_objects >= 0.95 * 22
    assert abs(s.mean_words_per_scene - 4.1) / 4.1 < 0.05
    assert abs(s.mean_objects_per_scene - 2.4) / 2.4 < 0.05


def test_synthetic_deterministic_in_seed():
    cfg = SynthConfig(n_words=12, n_objects=10, n_scenes=50)
    assert generate_synthetic(cfg, 3) == generate_synthetic(cfg, 3)
    assert generate_synthetic(cfg, 3) != generate_synthetic(cfg, 4)


def test_noiseless_one_to_one_scenes_are_exact():
    # without distractor words, scene words are exactly the gold labels
    # of the scene's objects
    cfg = SynthConfig(
        n_words=12, n_objects=12, n_scenes=100, words_per_scene=2.5, objects_per_scene=2.5
    )
    c = generate_synthetic(cfg, seed=9)
    gold_word_of = {o: w for w, o in c.gold.entries}
    assert len(gold_word_of) == c.inventory.size  # one-to-one, all covered
    for scene in c.scenes:
        assert set(scene.words) == {gold_word_of[o] for o in scene.objects}


def test_synthetic_with_noise_withholds_gold_words():
    cfg = SynthConfig(
        n_words=12, n_objects=12, n_scenes=200, words_per_scene=2.5,
        objects_per_scene=2.5, noise=0.4,
    )
    c = generate_synthetic(cfg, seed=9)
    gold_word_of = {o: w for w, o in c.gold.entries}
    missing = sum(
        1
        for scene in c.scenes
        for o in scene.objects
        if o in gold_word_of and gold_word_of[o] not in scene.words
    )
    assert missing > 0


def test_synthetic_config_validation():
    with pytest.raises(ValueError, match="words_per_scene"):
        SynthConfig(n_words=3, n_objects=3, n_scenes=1, words_per_scene=5.0)
    with pytest.raises(ValueError, match="noise"):
        SynthConfig(n_words=3, n_objects=3, n_scenes=1, words_per_scene=2, objects_per_scene=2, noise=1.5)
    with pytest.raises(ValueError, match="word_distribution"):
        SynthConfig(n_words=3, n_objects=3, n_scenes=1, words_per_scene=2, objects_per_scene=2, word_distribution="pareto")


def test_synthetic_has_no_accidental_novel_items():
    # items that would end up at frequency 0 are compacted away instead
    cfg = SynthConfig(n_words=30, n_objects=25, n_scenes=15)  # far too few scenes
    c = generate_synthetic(cfg, seed=2)
    assert c.vocabulary.novel_ids() == ()
    assert c.inventory.novel_ids() == ()


# ---------------------------------------------------------------------------
# novel-item injection


def test_inject_grows_and_marks_novel(tiny_corpus):
    c = inject_novel_items(tiny_corpus, 2, 3)
    assert c.vocabulary.size == 9
    assert c.inventory.size == 6
    assert c.vocabulary.words[-2:] == ("dax1", "dax2")
    assert c.inventory.names[-3:] == ("DAX1", "DAX2", "DAX3")
    assert c.vocabulary.novel_ids() == (7, 8)
    assert c.inventory.novel_ids() == (3, 4, 5)
    assert c.scenes == tiny_corpus.scenes
    assert c.gold == tiny_corpus.gold


def test_inject_zero_is_identity(tiny_corpus):
    assert inject_novel_items(tiny_corpus, 0, 0) is tiny_corpus


def test_inject_rejects_name_collisions(tiny_corpus):
    grown = inject_novel_items(tiny_corpus, 1, 1)
    with pytest.raises(ValueError, match="collides"):
        inject_novel_items(grown, 1, 0)  # would mint a second "dax1"
    with pytest.raises(ValueError, match="collides"):
        inject_novel_items(grown, 0, 1)


def test_inject_rejects_novel_objects_on_feature_corpora():
    fc = generate_feature_corpus(
        FeatureSynthConfig(n_categories=4, instances_per_category=3, feature_dim=5, n_scenes=20, objects_per_scene=2.0),
        seed=1,
    )
    with pytest.raises(ValueError, match="feature-bearing"):
        inject_novel_items(fc, 1, 1)
    grown = inject_novel_items(fc, 2, 0)  # novel words alone are fine
    assert grown.vocabulary.novel_ids() != ()


# ---------------------------------------------------------------------------
# the instance-based format


def _write_visual(tmp_path, scene_records, feature_lines):
    sp = tmp_path / "scenes.jsonl"
    fp = tmp_path / "features.txt"
    sp.write_text("\n".join(json.dumps(r) for r in scene_records) + "\n")
    fp.write_text("\n".join(feature_lines) + "\n")
    return sp, fp


def _obj(inst, label):
    return {"instance": inst, "label": label}


def test_load_visual_small_example(tmp_path):
    sp, fp = _write_visual(
        tmp_path,
        [
            {"image": "im0", "caption_id": 0, "objects": [_obj("d1", "dog"), _obj("c1", "cat")],
             "words": ["the", "dog", "runs"]},
            {"image": "im1", "caption_id": 1, "objects": [_obj("d2", "dog")],
             "words": ["a", "dog"]},
        ],
        ["3", "d1 0.1 0.2 0.3", "c1 1.0 0.0 0.0", "d2 0.2 0.1 0.3", "x9 9 9 9"],
    )
    c = load_visual(sp, fp)
    assert c.vocabulary.words == ("the", "dog", "runs", "a")
    assert c.inventory.names == ("d1", "c1", "d2")
    assert c.inventory.categories == ("dog", "cat", "dog")
    assert c.inventory.features.shape == (3, 3)  # unused instance x9 dropped
    assert c.inventory.features[1].tolist() == [1.0, 0.0, 0.0]
    # 'dog' is in both captions, so both dog instances are annotated
    assert c.alignments == (((1, 0),), ((1, 2),))
    assert c.gold is None


def test_visual_round_trip(tmp_path):
    fc = generate_feature_corpus(
        FeatureSynthConfig(n_categories=5, instances_per_category=4, feature_dim=6, n_scenes=30, objects_per_scene=2.0),
        seed=4,
    )
    sp = tmp_path / "s.jsonl"
    fp = tmp_path / "f.txt"
    save_visual(fc, sp, fp)
    back = load_visual(sp, fp)
    assert back.scenes == fc.scenes
    assert back.vocabulary == fc.vocabulary
    assert back.inventory == fc.inventory
    assert back.alignments == fc.alignments
    assert back.gold is None  # gold is not part of the on-disk format


@pytest.mark.parametrize(
    "records,features,message",
    [
        ([{"image": "i", "caption_id": 0, "objects": [_obj("a", "x")], "words": ["x"]}],
         ["2", "b 1 2"], "no feature vector for instance ID 'a'"),
        (["not json"], ["1", "a 1"], "invalid JSON"),
        ([{"caption_id": 0, "objects": [_obj("a", "x")], "words": ["x"]}],
         ["1", "a 1"], "missing field 'image'"),
        ([{"image": "i", "caption_id": 0, "objects": [], "words": ["x"]}],
         ["1", "a 1"], "non-empty list"),
        ([{"image": "i", "caption_id": 0, "objects": [_obj("a", "x")], "words": []}],
         ["1", "a 1"], "non-empty list of strings"),
        ([{"image": "i", "caption_id": 0, "objects": [{"instance": "a"}], "words": ["x"]}],
         ["1", "a 1"], "needs 'instance' and 'label'"),
    ],
)
def test_visual_scene_errors(tmp_path, records, features, message):
    sp = tmp_path / "s.jsonl"
    fp = tmp_path / "f.txt"
    sp.write_text("\n".join(r if isinstance(r, str) else json.dumps(r) for r in records) + "\n")
    fp.write_text("\n".join(features) + "\n")
    with pytest.raises(CorpusFormatError, match=message):
        load_visual(sp, fp)


@pytest.mark.parametrize(
    "features,message",
    [
        (["x 1 2"], "header must be the integer dimensionality"),
        (["0"], "must be positive"),
        (["2", "a 1 2 3"], "line 2.*expected ID \\+ 2 values"),
        (["2", "a 1 2", "a 3 4"], "duplicate instance ID"),
        (["2", "a 1 oops"], "non-numeric"),
        ([""], "empty feature table"),
    ],
)
def test_feature_table_errors(tmp_path, features, message):
    sp = tmp_path / "s.jsonl"
    fp = tmp_path / "f.txt"
    sp.write_text(json.dumps({"image": "i", "caption_id": 0, "objects": [_obj("a", "x")], "words": ["x"]}) + "\n")
    fp.write_text("\n".join(features) + "\n")
    with pytest.raises(CorpusFormatError, match=message):
        load_visual(sp, fp)


# ---------------------------------------------------------------------------
# category holdout


@pytest.fixture(scope="module")
def feature_corpus():
    return generate_feature_corpus(
        FeatureSynthConfig(
            n_categories=8, instances_per_category=6, feature_dim=10, n_scenes=120,
            objects_per_scene=2.2,
        ),
        seed=6,
    )


def test_holdout_postconditions(feature_corpus):
    c = feature_corpus
    label = c.inventory.categories[c.scenes[0].objects[0]]
    train, eval_scenes = holdout_category(c, {label}, {label})
    wid = train.vocabulary.id_of(label)
    held = set(train.inventory.ids_of_category(label))
    assert train.vocabulary.frequency[wid] == 0  # the word is now novel
    for oid in held:
        assert train.inventory.frequency[oid] == 0
    for s in train.scenes:
        assert wid not in s.words
        assert not held & set(s.objects)
    assert eval_scenes, "the holdout produced no evaluation scenes"
    for s in eval_scenes:
        held_here = held & set(s.objects)
        assert len(held_here) == 1  # ambiguous scenes skipped by default
        assert len(s.objects) >= 2
    # alignments survive, filtered to surviving items
    assert train.alignments is not None and len(train.alignments) == len(train.scenes)
    for s, al in zip(train.scenes, train.alignments):
        for w, o in al:
            assert w in s.words and o in s.objects


def test_holdout_unknown_label(feature_corpus):
    with pytest.raises(ValueError, match="no instances carry"):
        holdout_category(feature_corpus, set(), {"zebra"})


def test_holdout_keep_ambiguous(tmp_path):
    # craft a corpus where one scene holds two instances of the category
    records = [
        {"image": "i0", "caption_id": 0,
         "objects": [_obj("d1", "dog"), _obj("d2", "dog"), _obj("c1", "cat")],
         "words": ["dog", "cat"]},
        {"image": "i1", "caption_id": 1,
         "objects": [_obj("d1", "dog"), _obj("c1", "cat")], "words": ["dog", "cat"]},
        {"image": "i2", "caption_id": 2,
         "objects": [_obj("c1", "cat"), _obj("b1", "bird")], "words": ["cat", "bird"]},
    ]
    feats = ["2", "d1 1 0", "d2 1 0.1", "c1 0 1", "b1 -1 0"]
    c = load_visual(*_write_visual(tmp_path, records, feats))
    _, plain = holdout_category(c, {"dog"}, {"dog"})
    assert len(plain) == 1  # only the unambiguous dog scene
    _, kept = holdout_category(c, {"dog"}, {"dog"}, keep_ambiguous=True)
    assert len(kept) == 2


def test_holdout_that_empties_training_fails(tmp_path):
    records = [
        {"image": "i0", "caption_id": 0, "objects": [_obj("d1", "dog")], "words": ["dog"]},
    ]
    c = load_visual(*_write_visual(tmp_path, records, ["1", "d1 1"]))
    with pytest.raises(ValueError, match="every training scene"):
        holdout_category(c, {"dog"}, {"dog"})


# ---------------------------------------------------------------------------
# the feature generator


def test_feature_corpus_shape_and_alignments():
    cfg = FeatureSynthConfig(
        n_categories=6, instances_per_category=5, feature_dim=8, n_scenes=60, objects_per_scene=2.0
    )
    c = generate_feature_corpus(cfg, seed=8)
    assert c.inventory.features.shape[1] == 8
    assert c.alignments is not None
    # caption words are exactly the labels of the scene's instances
    for s, al in zip(c.scenes, c.alignments):
        labels = {c.inventory.categories[o] for o in s.objects}
        words = {c.vocabulary.words[w] for w in s.words}
        assert words == labels
        assert len(al) == len(s.objects)
    assert generate_feature_corpus(cfg, 8) == generate_feature_corpus(cfg, 8)


def test_feature_clusters_are_tighter_within_category():
    cfg = FeatureSynthConfig(
        n_categories=5, instances_per_category=10, feature_dim=16, n_scenes=80,
        objects_per_scene=2.0, within_sd=0.2,
    )
    c = generate_feature_corpus(cfg, seed=10)
    feats = c.inventory.features
    cats = np.array([c.inventory.categories[i] for i in range(c.inventory.size)])
    within, across = [], []
    for i in range(len(cats)):
        for j in range(i + 1, len(cats)):
            d = float(np.linalg.norm(feats[i] - feats[j]))
            (within if cats[i] == cats[j] else across).append(d)
    assert np.mean(within) < 0.5 * np.mean(across)
