"""Referent selection: given a word and a scene, pick an object.

Two strategies. "similarity" takes the candidate with the highest
cosine. "bayes" scores candidates by the probability that a speaker
looking at the object would utter the word:

    p(w | o) = s(w, o) / sum over the whole vocabulary of s(w', o)

with s a non-negative transform of the cosine; with a uniform prior
over the scene's objects this normalizer is what separates the two
strategies. The default transform is the shift s = (cos + 1) / 2;
s = exp(cos) is available as "softmax". Ties break to the lowest
object ID and are flagged on the outcome.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Scene
from .model import Model

STRATEGIES = ("similarity", "bayes")
NORMALIZATIONS = ("shift", "softmax")


@dataclass(frozen=True)
class SelectionOutcome:
    chosen: int  # object ID
    scores: tuple[float, ...]  # aligned with candidates
    candidates: tuple[int, ...]  # sorted object IDs
    tie: bool  # more than one candidate attained the max


def _as_candidates(scene) -> tuple[int, ...]:
    if isinstance(scene, Scene):
        return scene.objects
    cands = tuple(sorted(set(int(o) for o in scene)))
    if not cands:
        raise ValueError("a selection needs at least one candidate object")
    return cands


def pick_from_scores(scores, candidates: tuple[int, ...]) -> SelectionOutcome:
    """Argmax with lowest-ID tie-breaking (candidates are sorted)."""
    sc = np.asarray(scores, dtype=np.float64)
    if sc.shape[0] != len(candidates):
        raise ValueError("scores and candidates differ in length")
    top = float(sc.max())
    tie = int((sc == top).sum()) > 1
    chosen = candidates[int(np.argmax(sc))]
    return SelectionOutcome(chosen, tuple(float(x) for x in sc), tuple(candidates), tie)


def select_by_similarity(model: Model, word: int, scene) -> SelectionOutcome:
    """Highest-cosine candidate. scene may be a Scene or an ID iterable."""
    cands = _as_candidates(scene)
    return pick_from_scores([model.similarity(word, o) for o in cands], cands)


def score_transform(sims: np.ndarray, normalization: str = "shift") -> np.ndarray:
    """Non-negative speaker scores s(w, o) from a cosine matrix."""
    if normalization == "shift":
        return (np.asarray(sims, dtype=np.float64) + 1.0) / 2.0
    if normalization == "softmax":
        return np.exp(np.asarray(sims, dtype=np.float64))
    raise ValueError(f"unknown normalization {normalization!r}; choose from {NORMALIZATIONS}")


def speaker_matrix(sims: np.ndarray, normalization: str = "shift") -> np.ndarray:
    """p(w | o) for every word and object: columns sum to one."""
    s = score_transform(sims, normalization)
    z = s.sum(axis=0)
    if np.any(z == 0.0):
        raise ValueError(f"object {int(np.argmin(z))} has a zero speaker normalizer")
    return s / z


def speaker_prob(model: Model, word: int, object_id: int, normalization: str = "shift") -> float:
    """p(word | object) under the speaker model."""
    if not 0 <= word < model.n_words:
        raise IndexError(f"word ID {word} out of range [0, {model.n_words})")
    if not 0 <= object_id < model.n_objects:
        raise IndexError(f"object ID {object_id} out of range [0, {model.n_objects})")
    return float(speaker_matrix(model.similarity_matrix(), normalization)[word, object_id])


def bayes_pick(
    sims: np.ndarray, word: int, candidates, normalization: str = "shift"
) -> SelectionOutcome:
    """Speaker-probability argmax over candidates, from a cosine matrix."""
    cands = _as_candidates(candidates)
    s = score_transform(sims, normalization)
    z = s.sum(axis=0)
    zc = z[list(cands)]
    if np.any(zc == 0.0):
        bad = cands[int(np.argmin(zc))]
        raise ValueError(f"object {bad} has a zero speaker normalizer")
    return pick_from_scores(s[word, list(cands)] / zc, cands)


def select_by_bayes(model: Model, word: int, scene, normalization: str = "shift") -> SelectionOutcome:
    """Candidate maximizing p(word | candidate); uniform prior over the scene."""
    if not 0 <= word < model.n_words:
        raise IndexError(f"word ID {word} out of range [0, {model.n_words})")
    return bayes_pick(model.similarity_matrix(), word, scene, normalization)


def bayes_oracle(sims, word: int, scene, normalization: str = "shift") -> int:
    """Brute-force enumeration of the speaker-probability argmax.

    Deliberately written as plain loops with no shared code with
    bayes_pick; used to cross-check it. Same tie handling: the first
    (lowest-ID) candidate attaining the running maximum wins.
    """
    m = np.asarray(sims, dtype=np.float64)
    cands = _as_candidates(scene)
    best_id = None
    best_p = None
    for o in cands:
        z = 0.0
        for w in range(m.shape[0]):
            if normalization == "shift":
                z += (m[w, o] + 1.0) / 2.0
            else:
                z += float(np.exp(m[w, o]))
        if z == 0.0:
            raise ValueError(f"object {o} has a zero speaker normalizer")
        if normalization == "shift":
            p = ((m[word, o] + 1.0) / 2.0) / z
        else:
            p = float(np.exp(m[word, o])) / z
        if best_p is None or p > best_p:
            best_p = p
            best_id = o
    return int(best_id)
