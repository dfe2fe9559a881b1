"""Scoring trained models: comprehension tests, lexicon F1, aggregation.

A TestScene is one forced-choice trial: a prompt word, candidate
objects, and the subset counting as correct. Builders cover the three
designs used by the experiment pipeline: synthetic novel-word trials
(novel object among familiar foils), familiar-word trials from gold
pairs or alignment annotations, and held-out-category trials.

best_f scores the lexicon read off the similarity matrix: sweep a
threshold over every distinct similarity value (plus a sentinel below
the minimum), call every pair above the threshold a lexicon entry, and
report the best F1 against the gold pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Corpus, GoldLexicon, Scene
from .model import Model
from .selection import pick_from_scores, score_transform

METRIC_NOVEL = "novel_accuracy"
METRIC_FAMILIAR = "familiar_accuracy"
METRIC_TIE = "tie_rate"
METRIC_CHANCE = "chance"
METRIC_BEST_F = "best_f"


@dataclass(frozen=True)
class TestScene:
    """One forced-choice trial."""

    __test__ = False  # not a pytest class, despite the name

    prompt: int  # word ID
    candidates: tuple[int, ...]  # object IDs, stored sorted
    correct: frozenset[int]  # non-empty subset of candidates

    def __post_init__(self):
        cands = tuple(sorted(set(int(o) for o in self.candidates)))
        corr = frozenset(int(o) for o in self.correct)
        if not cands:
            raise ValueError("a test scene needs candidates")
        if not corr:
            raise ValueError("a test scene needs at least one correct object")
        if not corr <= set(cands):
            raise ValueError("correct objects must be among the candidates")
        object.__setattr__(self, "candidates", cands)
        object.__setattr__(self, "correct", corr)

    @property
    def chance(self) -> float:
        return len(self.correct) / len(self.candidates)


@dataclass(frozen=True)
class ScoreSummary:
    accuracy: float
    tie_rate: float
    chance: float
    n_scenes: int


@dataclass(frozen=True)
class RunResult:
    """Evaluation of one trained run under one selection strategy."""

    condition: str  # e.g. "joint-bayes"
    loss: str
    strategy: str
    seed: int
    accuracy: float
    tie_rate: float
    chance: float | None = None
    best_f: float | None = None
    familiar_accuracy: float | None = None


@dataclass(frozen=True)
class Aggregate:
    condition: str
    metric: str
    mean: float
    sd: float
    n: int

    @property
    def single(self) -> bool:
        # a sample of one has no spread estimate; sd is reported as 0
        return self.n == 1


# ---------------------------------------------------------------------------
# test scene builders


def build_novel_test_scenes(
    corpus: Corpus,
    n_novel_words: int = 5,
    scenes_per_word: int = 20,
    familiar_per_scene: int = 2,
    seed: int = 0,
) -> list[TestScene]:
    """Forced-choice trials pairing each novel word with its novel object.

    The i-th novel word (by ID) denotes the i-th novel object; each
    trial shows that object among familiar_per_scene distinct familiar
    foils drawn without replacement per scene. Deterministic in seed.
    """
    novel_w = corpus.vocabulary.novel_ids()
    novel_o = corpus.inventory.novel_ids()
    familiar_o = corpus.inventory.familiar_ids()
    if n_novel_words < 1 or scenes_per_word < 1 or familiar_per_scene < 1:
        raise ValueError("scene-builder counts must be at least 1")
    if len(novel_w) < n_novel_words:
        raise ValueError(f"need {n_novel_words} novel words, corpus has {len(novel_w)}")
    if len(novel_o) < n_novel_words:
        raise ValueError(f"need {n_novel_words} novel objects, corpus has {len(novel_o)}")
    if len(familiar_o) < familiar_per_scene:
        raise ValueError(
            f"need {familiar_per_scene} familiar objects, corpus has {len(familiar_o)}"
        )
    rng = np.random.default_rng(seed)
    fam = np.asarray(familiar_o)
    scenes = []
    for i in range(n_novel_words):
        w, o = novel_w[i], novel_o[i]
        for _ in range(scenes_per_word):
            foils = rng.choice(fam, size=familiar_per_scene, replace=False)
            scenes.append(TestScene(w, (o, *foils.tolist()), frozenset({o})))
    return scenes


def build_familiar_test_scenes(corpus: Corpus, min_candidates: int = 2) -> list[TestScene]:
    """Familiar-word trials over the corpus's own scenes.

    With alignment annotations (instance-based corpora) a trial asks
    for the annotated referent instances; otherwise gold pairs mark the
    correct objects. Scenes with fewer than min_candidates objects, and
    words with no correct object in the scene, are skipped.
    """
    if corpus.alignments is None and corpus.gold is None:
        raise ValueError("familiar trials need alignments or a gold lexicon")
    trials: list[TestScene] = []
    if corpus.alignments is not None:
        for scene, align in zip(corpus.scenes, corpus.alignments):
            if len(scene.objects) < min_candidates:
                continue
            by_word: dict[int, set[int]] = {}
            for w, o in align:
                by_word.setdefault(w, set()).add(o)
            for w in sorted(by_word):
                if corpus.vocabulary.frequency[w] > 0:
                    trials.append(TestScene(w, scene.objects, frozenset(by_word[w])))
        return trials
    gold_pairs = corpus.gold.object_pairs(corpus.inventory)
    by_word_all: dict[int, set[int]] = {}
    for w, o in gold_pairs:
        by_word_all.setdefault(w, set()).add(o)
    for scene in corpus.scenes:
        if len(scene.objects) < min_candidates:
            continue
        present = set(scene.objects)
        for w in scene.words:
            if corpus.vocabulary.frequency[w] == 0 or w not in by_word_all:
                continue
            correct = by_word_all[w] & present
            if correct:
                trials.append(TestScene(w, scene.objects, frozenset(correct)))
    return trials


def build_holdout_test_scenes(
    corpus: Corpus,
    eval_scenes: Sequence[Scene],
    words: set[str],
    labels: set[str],
    per_word: bool = False,
) -> list[TestScene]:
    """Trials for held-out-category scenes.

    corpus must be the original (pre-holdout) corpus so the prompt can
    default to the most frequent held-out word; per_word instead emits
    one trial per held-out word per scene. Correct objects are the held
    instances present in the scene.
    """
    held_wids = sorted(corpus.vocabulary.id_of(w) for w in words if w in corpus.vocabulary)
    if not held_wids:
        raise ValueError("none of the held-out word forms occur in the vocabulary")
    held_oids: set[int] = set()
    for lab in sorted(labels):
        held_oids.update(corpus.inventory.ids_of_category(lab))
    if not held_oids:
        raise ValueError(f"no instances carry any of the held-out labels {sorted(labels)}")
    if per_word:
        prompts = held_wids
    else:
        freq = corpus.vocabulary.frequency
        prompts = [max(held_wids, key=lambda w: (freq[w], -w))]
    trials = []
    for scene in eval_scenes:
        correct = frozenset(o for o in scene.objects if o in held_oids)
        if not correct:
            raise ValueError("an eval scene contains no held-out instance")
        for w in prompts:
            trials.append(TestScene(w, scene.objects, correct))
    return trials


# ---------------------------------------------------------------------------
# scoring


def score_scenes(
    model: Model,
    scenes: Sequence[TestScene],
    strategy: str,
    normalization: str = "shift",
) -> ScoreSummary:
    """Accuracy, tie rate and chance level of a strategy over trials.

    Chance is the mean of |correct| / |candidates|: the accuracy of a
    uniformly random chooser on the same trials.
    """
    if strategy not in ("similarity", "bayes"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if not scenes:
        raise ValueError("no test scenes")
    sims = model.similarity_matrix()
    if strategy == "bayes":
        s = score_transform(sims, normalization)
        z = s.sum(axis=0)
        if np.any(z == 0.0):
            raise ValueError(f"object {int(np.argmin(z))} has a zero speaker normalizer")
    hits = 0
    ties = 0
    chance = 0.0
    for trial in scenes:
        cand = list(trial.candidates)
        if strategy == "similarity":
            scores = sims[trial.prompt, cand]
        else:
            scores = s[trial.prompt, cand] / z[cand]
        outcome = pick_from_scores(scores, trial.candidates)
        if outcome.chosen in trial.correct:
            hits += 1
        if outcome.tie:
            ties += 1
        chance += trial.chance
    n = len(scenes)
    return ScoreSummary(hits / n, ties / n, chance / n, n)


def novel_accuracy(
    model: Model, scenes: Sequence[TestScene], strategy: str, normalization: str = "shift"
) -> float:
    """Fraction of novel-word trials whose chosen object is correct."""
    return score_scenes(model, scenes, strategy, normalization).accuracy


def familiar_accuracy(
    model: Model, scenes: Sequence[TestScene], strategy: str, normalization: str = "shift"
) -> float:
    """Fraction of familiar-word trials whose chosen object is correct."""
    return score_scenes(model, scenes, strategy, normalization).accuracy


# ---------------------------------------------------------------------------
# lexicon F1


def best_f(model: Model, corpus: Corpus, gold: GoldLexicon | None = None) -> float:
    """Best F1 of thresholded similarity against the gold pairs.

    Novel (frequency-0) words and objects are excluded from the sweep;
    they are evaluation scaffolding and have no gold entries.
    """
    gold = gold if gold is not None else corpus.gold
    if gold is None or len(gold) == 0:
        raise ValueError("best_f needs a non-empty gold lexicon")
    fam_w = np.asarray(corpus.vocabulary.familiar_ids())
    fam_o = np.asarray(corpus.inventory.familiar_ids())
    if fam_w.size == 0 or fam_o.size == 0:
        raise ValueError("no familiar words or objects to score")
    gold_pairs = gold.object_pairs(corpus.inventory)

    sims = model.similarity_matrix()[np.ix_(fam_w, fam_o)]
    is_gold = np.zeros(sims.shape, dtype=bool)
    col_of = {int(o): j for j, o in enumerate(fam_o)}
    row_of = {int(w): i for i, w in enumerate(fam_w)}
    g = 0
    for w, o in gold_pairs:
        if w in row_of and o in col_of:
            is_gold[row_of[w], col_of[o]] = True
            g += 1
    if g == 0:
        raise ValueError("no gold pair survives the novelty restriction")

    vals = sims.ravel()
    flags = is_gold.ravel()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    flags = flags[order]
    cum_hits = np.cumsum(flags)
    # prefix boundaries: positions where the next value is strictly lower,
    # i.e. the lexicon {sim >= vals[i]}; the final prefix is the sentinel
    boundary = np.flatnonzero(np.diff(vals) < 0)
    sizes = np.concatenate([boundary + 1, [vals.size]])
    best = 0.0
    for size in sizes:
        hits = int(cum_hits[size - 1])
        if hits == 0:
            continue
        precision = hits / size
        recall = hits / g
        f1 = 2 * precision * recall / (precision + recall)
        if f1 > best:
            best = f1
    return best


# ---------------------------------------------------------------------------
# aggregation


def aggregate_runs(results: Sequence[RunResult]) -> list[Aggregate]:
    """Per-condition mean / sample SD / n for every metric present.

    SD uses the n-1 denominator; a single run reports SD 0 (see
    Aggregate.single). Output is sorted by (condition, metric).
    """
    groups: dict[tuple[str, str], list[float]] = {}
    for r in results:
        fields = [
            (METRIC_NOVEL, r.accuracy),
            (METRIC_TIE, r.tie_rate),
            (METRIC_CHANCE, r.chance),
            (METRIC_BEST_F, r.best_f),
            (METRIC_FAMILIAR, r.familiar_accuracy),
        ]
        for metric, value in fields:
            if value is not None:
                groups.setdefault((r.condition, metric), []).append(float(value))
    out = []
    for (condition, metric), vals in sorted(groups.items()):
        arr = np.asarray(vals)
        sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        out.append(Aggregate(condition, metric, float(arr.mean()), sd, int(arr.size)))
    return out
