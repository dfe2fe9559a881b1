"""Vector math used throughout: cosine similarity, its gradient, SGD.

All functions take 1-d float64 arrays (anything array-like is converted)
and are pure. Cosine values are clamped to [-1, 1] so downstream score
transforms never see values pushed outside the interval by rounding.
"""

from __future__ import annotations

import numpy as np

VECTOR_DIM = 200  # default embedding width; nothing below depends on it


def _as_vector(x) -> np.ndarray:
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    return v


def cosine(u, v) -> float:
    """Cosine similarity of two nonzero vectors, clamped to [-1, 1].

    Raises ValueError if the vectors differ in length or either has zero
    norm (the quantity is undefined there).
    """
    u = _as_vector(u)
    v = _as_vector(v)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine is undefined for a zero-norm vector")
    c = float(u @ v) / (nu * nv)
    return min(1.0, max(-1.0, c))


def cosine_grad(u, v) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of cosine(u, v) with respect to u and v.

    d cos / du = v / (|u||v|) - cos(u, v) * u / |u|^2, and symmetrically
    for v. Same zero-norm restriction as cosine().
    """
    u = _as_vector(u)
    v = _as_vector(v)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine gradient is undefined for a zero-norm vector")
    c = min(1.0, max(-1.0, float(u @ v) / (nu * nv)))
    gu = v / (nu * nv) - (c / (nu * nu)) * u
    gv = u / (nu * nv) - (c / (nv * nv)) * v
    return gu, gv


def sgd_step(params, grad, lr: float) -> np.ndarray:
    """One gradient-descent update: params - lr * grad (new array)."""
    p = _as_vector(params)
    g = _as_vector(grad)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {g.shape[0]}")
    return p - lr * g
