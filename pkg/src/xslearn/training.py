"""Max-margin training of word-object similarity.

Three hinge losses over a positive pair (w, o), margin 1 by default:

  over objects: sum_i max(0, margin - cos(w, o) + cos(w, n_i))
                discourages one word covering several objects
  over words:   sum_i max(0, margin - cos(w, o) + cos(m_i, o))
                discourages several words covering one object
  joint:        the sum of both

Negatives are drawn uniformly with replacement from the full inventory
or vocabulary, excluding only the positive item; novel items are fair
game. Updates are plain per-pair SGD on the cosine gradients, optionally
weighted by inverse word frequency. One epoch visits every pair of the
corpus once in a seeded shuffled order, with negatives redrawn each
epoch. The reported model is the snapshot from the epoch with the
lowest mean loss.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import backend as backend_mod
from .corpus import Corpus, pair_arrays, token_weights
from .model import Model, init_model
from .numerics import VECTOR_DIM, cosine, cosine_grad

logger = logging.getLogger(__name__)

LOSS_KINDS = ("objects", "words", "joint")
JITTER_POOL_ROWS = 16


class TrainingError(RuntimeError):
    """Training diverged or could not proceed."""


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "joint"
    lr: float = 0.1
    k_negatives: int = 5
    max_epochs: int = 20
    margin: float = 1.0
    weighted: bool | None = None  # None: on for table corpora, off with features
    exclude_scene: bool = False  # negatives avoid the positive's whole scene
    backend: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {LOSS_KINDS}")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.k_negatives < 1:
            raise ValueError("k_negatives must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.margin <= 0:
            raise ValueError("margin must be positive")


@dataclass(frozen=True)
class TrainResult:
    model: Model  # snapshot from the best epoch
    trajectory: tuple[float, ...]  # mean weighted loss per epoch
    best_epoch: int  # index into trajectory (first minimum on ties)
    config: TrainConfig


# ---------------------------------------------------------------------------
# reference losses and gradients (the kernels must match these)


def _validate_pair(model: Model, word: int, obj: int, negatives, population: int, positive: int):
    negs = [int(n) for n in negatives]
    if not negs:
        raise ValueError("at least one negative is required")
    for n in negs:
        if not 0 <= n < population:
            raise IndexError(f"negative ID {n} out of range [0, {population})")
        if n == positive:
            raise ValueError(f"the positive item {positive} cannot be its own negative")
    return negs


def loss_over_objects(model: Model, word: int, obj: int, negatives, margin: float = 1.0) -> float:
    """Hinge loss of (word, obj) against negative objects."""
    negs = _validate_pair(model, word, obj, negatives, model.n_objects, obj)
    cpos = model.similarity(word, obj)
    return float(sum(max(0.0, margin - cpos + model.similarity(word, n)) for n in negs))


def loss_over_words(model: Model, word: int, obj: int, negatives, margin: float = 1.0) -> float:
    """Hinge loss of (word, obj) against negative words."""
    negs = _validate_pair(model, word, obj, negatives, model.n_words, word)
    cpos = model.similarity(word, obj)
    return float(sum(max(0.0, margin - cpos + model.similarity(n, obj)) for n in negs))


def loss_joint(
    model: Model, word: int, obj: int, object_negatives, word_negatives, margin: float = 1.0
) -> float:
    """Sum of the over-objects and over-words losses for one pair."""
    return loss_over_objects(model, word, obj, object_negatives, margin) + loss_over_words(
        model, word, obj, word_negatives, margin
    )


def pair_gradients(
    model: Model,
    word: int,
    obj: int,
    object_negatives=(),
    word_negatives=(),
    margin: float = 1.0,
) -> tuple[float, dict]:
    """Loss and analytic gradients for one positive pair.

    Returns (loss, grads) where grads maps ("word", id) / ("object", id)
    to dense gradient vectors; projection-mode models get a single
    ("proj", 0) matrix instead of object entries. Duplicate negatives
    accumulate. Built on numerics.cosine_grad; serves as the oracle the
    training kernels are checked against.
    """
    w = model.words.vector(word)
    o = model.encoder.encode(obj)
    cpos = cosine(w, o)
    gw_pos, go_pos = cosine_grad(w, o)
    table_mode = model.encoder.mode == "table"

    grads: dict = {}

    def add(key, vec):
        if key in grads:
            grads[key] = grads[key] + vec
        else:
            grads[key] = np.array(vec, dtype=np.float64)

    def add_object_grad(object_id: int, gvec: np.ndarray):
        if table_mode:
            add(("object", object_id), gvec)
        else:
            add(("proj", 0), np.outer(gvec, model.encoder.features[object_id]))

    loss = 0.0
    for n in [int(x) for x in object_negatives]:
        if n == obj:
            raise ValueError(f"the positive object {obj} cannot be its own negative")
        v = model.encoder.encode(n)
        term = margin - cpos + cosine(w, v)
        if term > 0.0:
            loss += term
            gw_n, gv_n = cosine_grad(w, v)
            add(("word", word), gw_n - gw_pos)
            add_object_grad(obj, -go_pos)
            add_object_grad(n, gv_n)
    for n in [int(x) for x in word_negatives]:
        if n == word:
            raise ValueError(f"the positive word {word} cannot be its own negative")
        u = model.words.vector(n)
        term = margin - cpos + cosine(u, o)
        if term > 0.0:
            loss += term
            gu_n, go_n = cosine_grad(u, o)
            add(("word", word), -gw_pos)
            add(("word", n), gu_n)
            add_object_grad(obj, go_n - go_pos)
    return loss, grads


# ---------------------------------------------------------------------------
# negative sampling


def sample_negatives(kind: str, k: int, exclude: int, rng: np.random.Generator, corpus: Corpus) -> np.ndarray:
    """k IDs drawn uniformly with replacement, excluding only `exclude`.

    kind is "object" or "word"; the population is the full inventory or
    vocabulary, novel items included.
    """
    if kind == "object":
        n = corpus.inventory.size
    elif kind == "word":
        n = corpus.vocabulary.size
    else:
        raise ValueError(f"unknown negative kind {kind!r}")
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 0 <= exclude < n:
        raise IndexError(f"exclude ID {exclude} out of range [0, {n})")
    if n < 2:
        raise ValueError(f"cannot sample {kind} negatives from a population of {n}")
    r = rng.integers(0, n - 1, size=k)
    return (r + (r >= exclude)).astype(np.int64)


def _presample(rng: np.random.Generator, n_pop: int, exclude: np.ndarray, k: int) -> np.ndarray:
    # Vectorized form of sample_negatives for a whole epoch: row t draws
    # k IDs uniformly from [0, n_pop) minus {exclude[t]}.
    if n_pop < 2:
        raise TrainingError(f"cannot sample negatives from a population of {n_pop}")
    r = rng.integers(0, n_pop - 1, size=(exclude.shape[0], k))
    return (r + (r >= exclude[:, None])).astype(np.int64)


def _presample_scene_excluded(
    rng: np.random.Generator,
    n_pop: int,
    scene_sets: list[frozenset],
    scene_idx: np.ndarray,
    k: int,
) -> np.ndarray:
    # Rejection-sample until no negative belongs to its pair's scene.
    for si in set(scene_idx.tolist()):
        if len(scene_sets[si]) >= n_pop:
            raise TrainingError(
                f"scene {si} spans the whole population of {n_pop}; no negatives exist"
            )
    ids = rng.integers(0, n_pop, size=(scene_idx.shape[0], k)).astype(np.int64)
    while True:
        bad = np.array(
            [ids[t, j] in scene_sets[scene_idx[t]] for t in range(ids.shape[0]) for j in range(k)],
            dtype=bool,
        ).reshape(ids.shape)
        n_bad = int(bad.sum())
        if n_bad == 0:
            return ids
        ids[bad] = rng.integers(0, n_pop, size=n_bad)


# ---------------------------------------------------------------------------
# the training loop


def _pair_weights(corpus: Corpus, pair_words: np.ndarray, weighted: bool) -> np.ndarray:
    if not weighted:
        return np.ones(pair_words.shape[0])
    tw = token_weights(corpus)
    return np.array([tw[int(w)] for w in pair_words])


def train(model: Model, corpus: Corpus, config: TrainConfig) -> TrainResult:
    """Train a copy of `model` on all of the corpus's word-object pairs.

    The input model is left untouched. Per epoch, in this order, the
    seeded RNG draws: the pair permutation, object negatives (if the
    loss uses them), word negatives (if used), and a small jitter pool
    for the zero-norm row guard. A non-finite epoch loss aborts.
    """
    work = model.clone()
    rng = np.random.default_rng(config.seed)
    pw, po, ps = pair_arrays(corpus)
    n = pw.shape[0]
    weighted = config.weighted
    if weighted is None:
        weighted = corpus.inventory.features is None
    base_weights = _pair_weights(corpus, pw, weighted)
    needs_obj = config.loss in ("objects", "joint")
    needs_word = config.loss in ("words", "joint")
    kernels = backend_mod.get_backend(config.backend)
    word_scene_sets = [frozenset(s.words) for s in corpus.scenes] if config.exclude_scene else None
    obj_scene_sets = [frozenset(s.objects) for s in corpus.scenes] if config.exclude_scene else None

    trajectory: list[float] = []
    best = np.inf
    best_epoch = -1
    best_model = None
    empty = np.zeros((n, 0), dtype=np.int64)

    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        pw_e = np.ascontiguousarray(pw[order])
        po_e = np.ascontiguousarray(po[order])
        ps_e = ps[order]
        wt_e = np.ascontiguousarray(base_weights[order])
        if needs_obj:
            if config.exclude_scene:
                obj_negs = _presample_scene_excluded(
                    rng, corpus.inventory.size, obj_scene_sets, ps_e, config.k_negatives
                )
            else:
                obj_negs = _presample(rng, corpus.inventory.size, po_e, config.k_negatives)
        else:
            obj_negs = empty
        if needs_word:
            if config.exclude_scene:
                word_negs = _presample_scene_excluded(
                    rng, corpus.vocabulary.size, word_scene_sets, ps_e, config.k_negatives
                )
            else:
                word_negs = _presample(rng, corpus.vocabulary.size, pw_e, config.k_negatives)
        else:
            word_negs = empty
        jitter = rng.uniform(-1e-6, 1e-6, size=(JITTER_POOL_ROWS, work.dim))

        if work.encoder.mode == "table":
            total, jit_used = kernels.train_epoch_tables(
                work.words.table,
                work.encoder.table,
                pw_e,
                po_e,
                obj_negs,
                word_negs,
                wt_e,
                config.lr,
                config.margin,
                jitter,
            )
        else:
            total, jit_used = kernels.train_epoch_projection(
                work.words.table,
                work.encoder.proj,
                work.encoder.features,
                pw_e,
                po_e,
                obj_negs,
                word_negs,
                wt_e,
                config.lr,
                config.margin,
                jitter,
                work.encoder.trains_projection,
            )
        if jit_used:
            logger.warning("epoch %d: re-jittered %d zero-norm rows", epoch, jit_used)
        mean = total / n
        if not np.isfinite(mean):
            raise TrainingError(
                f"non-finite mean loss at epoch {epoch} "
                f"(loss={config.loss}, lr={config.lr}, k={config.k_negatives}); "
                "lower the learning rate"
            )
        trajectory.append(float(mean))
        if mean < best:
            best = mean
            best_epoch = epoch
            best_model = work.clone()

    return TrainResult(best_model, tuple(trajectory), best_epoch, config)


def write_trial_log(result: TrainResult, path) -> None:
    """Per-epoch mean losses as a two-column CSV."""
    lines = ["epoch,loss"]
    lines += [f"{e},{loss!r}" for e, loss in enumerate(result.trajectory)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# hyperparameter search


@dataclass(frozen=True)
class SearchSpace:
    """Uniform sampling ranges for the random search."""

    lr: tuple[float, float] = (0.05, 1.0)
    init_range: tuple[float, float] = (0.01, 0.5)
    dims: tuple[int, ...] = (VECTOR_DIM,)

    def __post_init__(self):
        if not 0 <= self.lr[0] <= self.lr[1]:
            raise ValueError("bad lr range")
        if not 0 < self.init_range[0] <= self.init_range[1]:
            raise ValueError("bad init_range range")
        if not self.dims or any(d < 1 for d in self.dims):
            raise ValueError("dims must be positive")


@dataclass(frozen=True)
class SearchTrial:
    index: int
    lr: float
    init_range: float
    dim: int
    seed: int
    snapshot_loss: float
    best_epoch: int


def random_search(
    corpus: Corpus,
    budget: int,
    seed: int,
    base_config: TrainConfig | None = None,
    space: SearchSpace | None = None,
    encoder: str = "auto",
) -> tuple[TrainResult, list[SearchTrial]]:
    """Sample `budget` configurations uniformly; keep the lowest snapshot loss.

    Each trial draws lr and init_range uniformly from their ranges and a
    dim uniformly from the dim choices, then trains from a fresh
    per-trial seed. Ties on snapshot loss keep the earliest trial.
    Failed trials (diverged) are recorded with an infinite loss and
    skipped.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    base = base_config if base_config is not None else TrainConfig()
    space = space if space is not None else SearchSpace()
    master = np.random.default_rng(seed)

    best_result = None
    best_loss = np.inf
    trials: list[SearchTrial] = []
    for i in range(budget):
        lr = float(master.uniform(*space.lr))
        init_range = float(master.uniform(*space.init_range))
        dim = int(space.dims[int(master.integers(len(space.dims)))])
        init_seed = int(master.integers(2**62))
        train_seed = int(master.integers(2**62))
        cfg = replace(base, lr=lr, seed=train_seed)
        m0 = init_model(corpus, dim=dim, init_range=init_range, seed=init_seed, encoder=encoder)
        try:
            result = train(m0, corpus, cfg)
        except TrainingError as e:
            logger.warning("search trial %d diverged: %s", i, e)
            trials.append(SearchTrial(i, lr, init_range, dim, train_seed, float("inf"), -1))
            continue
        snapshot = result.trajectory[result.best_epoch]
        trials.append(SearchTrial(i, lr, init_range, dim, train_seed, snapshot, result.best_epoch))
        if snapshot < best_loss:
            best_loss = snapshot
            best_result = result
    if best_result is None:
        raise TrainingError(f"all {budget} search trials diverged")
    return best_result, trials


def write_sweep_log(trials: list[SearchTrial], path) -> None:
    """One line per search trial: sampled config and snapshot loss."""
    lines = ["trial,lr,init_range,dim,seed,best_epoch,snapshot_loss"]
    for t in trials:
        lines.append(
            f"{t.index},{t.lr!r},{t.init_range!r},{t.dim},{t.seed},{t.best_epoch},{t.snapshot_loss!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
