"""Pure-numpy training kernels.

One epoch of per-pair stochastic updates on the max-margin losses. The
compiled module xslearn._fastpath implements the same two functions with
the same semantics; this module is the reference and the fallback.

Contract shared by both backends, for one positive pair (w, o):

  terms over object negatives: t_j = margin - cos(w, o) + cos(w, n_j)
  terms over word negatives:   s_j = margin - cos(w, o) + cos(m_j, o)
  pair loss = sum of positive terms (only the kinds requested: an empty
  negative array disables that side)

Gradients of the pair loss are evaluated at the pre-update parameters,
then applied in a fixed order: word row, object (row or projection),
object-negative rows in sample order, word-negative rows in sample
order. Duplicate negatives accumulate. Each update is scaled by
lr * weights[t].

Zero-norm embedding rows are replaced, at the moment they are touched,
by the next row of the caller-supplied jitter pool; both backends
consume the pool in the same order so trajectories stay comparable.
Zero-norm *encodings* in projection mode raise instead: the projection
is the parameter, so jittering the encoding would not be expressible.

Returns (total weighted loss, number of jitter rows consumed).
"""

from __future__ import annotations

import numpy as np


def _ensure_row(table: np.ndarray, idx: int, jitter: np.ndarray, used: int) -> tuple[float, int]:
    # Re-jitter a row that has collapsed to exactly zero, then recompute
    # its norm. Returns (norm, jitter rows used).
    nrm = float(np.linalg.norm(table[idx]))
    if nrm == 0.0:
        if used >= jitter.shape[0]:
            raise RuntimeError("jitter pool exhausted; too many zero-norm rows in one epoch")
        table[idx] = jitter[used]
        used += 1
        nrm = float(np.linalg.norm(table[idx]))
    return nrm, used


def _clip(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -1.0, 1.0)


def train_epoch_tables(
    words: np.ndarray,
    objects: np.ndarray,
    pair_words: np.ndarray,
    pair_objects: np.ndarray,
    obj_negs: np.ndarray,
    word_negs: np.ndarray,
    weights: np.ndarray,
    lr: float,
    margin: float,
    jitter: np.ndarray,
) -> tuple[float, int]:
    """One epoch over embedding tables; words and objects are updated in place."""
    n_pairs = pair_words.shape[0]
    k_obj = obj_negs.shape[1]
    k_word = word_negs.shape[1]
    used = 0
    total = 0.0

    for t in range(n_pairs):
        wi = int(pair_words[t])
        oi = int(pair_objects[t])
        nw, used = _ensure_row(words, wi, jitter, used)
        no, used = _ensure_row(objects, oi, jitter, used)
        w = words[wi]
        o = objects[oi]
        cpos = min(1.0, max(-1.0, float(w @ o) / (nw * no)))

        pair_loss = 0.0
        n_active = 0

        if k_obj:
            negs = obj_negs[t]
            for j in range(k_obj):
                _, used = _ensure_row(objects, int(negs[j]), jitter, used)
            vn = objects[negs]  # fancy indexing copies: pre-update values
            nv = np.linalg.norm(vn, axis=1)
            cn = _clip((vn @ w) / (nw * nv))
            terms = margin - cpos + cn
            act_o = terms > 0.0
            a = int(act_o.sum())
            pair_loss += float(terms[act_o].sum())
            n_active += a
            g_negs_o = w[None, :] / (nw * nv[act_o, None]) - (cn[act_o, None] / nv[act_o, None] ** 2) * vn[act_o]
            gw_from_negs = (vn[act_o] / nv[act_o, None]).sum(axis=0) / nw - (float(cn[act_o].sum()) / nw**2) * w
        else:
            act_o = np.zeros(0, dtype=bool)
            g_negs_o = np.zeros((0, words.shape[1]))
            gw_from_negs = 0.0

        if k_word:
            wnegs = word_negs[t]
            for j in range(k_word):
                _, used = _ensure_row(words, int(wnegs[j]), jitter, used)
            un = words[wnegs]
            nu = np.linalg.norm(un, axis=1)
            dn = _clip((un @ o) / (nu * no))
            sterms = margin - cpos + dn
            act_w = sterms > 0.0
            b = int(act_w.sum())
            pair_loss += float(sterms[act_w].sum())
            n_active += b
            g_negs_w = o[None, :] / (nu[act_w, None] * no) - (dn[act_w, None] / nu[act_w, None] ** 2) * un[act_w]
            go_from_negs = (un[act_w] / nu[act_w, None]).sum(axis=0) / no - (float(dn[act_w].sum()) / no**2) * o
        else:
            act_w = np.zeros(0, dtype=bool)
            g_negs_w = np.zeros((0, words.shape[1]))
            go_from_negs = 0.0

        total += float(weights[t]) * pair_loss
        if n_active == 0:
            continue

        # d cos(w, o) shared by every active term, entering with sign -1
        gcw = o / (nw * no) - (cpos / nw**2) * w
        gcv = w / (nw * no) - (cpos / no**2) * o
        g_w = -n_active * gcw + gw_from_negs
        g_o = -n_active * gcv + go_from_negs

        scale = lr * float(weights[t])
        words[wi] -= scale * g_w
        objects[oi] -= scale * g_o
        if k_obj and act_o.any():
            np.subtract.at(objects, obj_negs[t][act_o], scale * g_negs_o)
        if k_word and act_w.any():
            np.subtract.at(words, word_negs[t][act_w], scale * g_negs_w)

    return total, used


def train_epoch_projection(
    words: np.ndarray,
    proj: np.ndarray,
    feats: np.ndarray,
    pair_words: np.ndarray,
    pair_objects: np.ndarray,
    obj_negs: np.ndarray,
    word_negs: np.ndarray,
    weights: np.ndarray,
    lr: float,
    margin: float,
    jitter: np.ndarray,
    train_projection: bool = True,
) -> tuple[float, int]:
    """One epoch with objects encoded as proj @ feature row.

    words and (when train_projection) proj are updated in place; feats is
    read-only. Word rows get the zero-norm jitter guard; a zero-norm
    object encoding raises ValueError.
    """
    n_pairs = pair_words.shape[0]
    k_obj = obj_negs.shape[1]
    k_word = word_negs.shape[1]
    used = 0
    total = 0.0

    for t in range(n_pairs):
        wi = int(pair_words[t])
        oi = int(pair_objects[t])
        nw, used = _ensure_row(words, wi, jitter, used)
        w = words[wi]
        f_pos = feats[oi]
        o = proj @ f_pos
        no = float(np.linalg.norm(o))
        if no == 0.0:
            raise ValueError(f"object {oi} has a zero-norm encoding under the current projection")
        cpos = min(1.0, max(-1.0, float(w @ o) / (nw * no)))

        pair_loss = 0.0
        n_active = 0

        if k_obj:
            negs = obj_negs[t]
            f_negs = feats[negs]
            vn = f_negs @ proj.T
            nv = np.linalg.norm(vn, axis=1)
            if np.any(nv == 0.0):
                bad = int(negs[int(np.argmin(nv))])
                raise ValueError(f"object {bad} has a zero-norm encoding under the current projection")
            cn = _clip((vn @ w) / (nw * nv))
            terms = margin - cpos + cn
            act_o = terms > 0.0
            a = int(act_o.sum())
            pair_loss += float(terms[act_o].sum())
            n_active += a
            g_negs_o = w[None, :] / (nw * nv[act_o, None]) - (cn[act_o, None] / nv[act_o, None] ** 2) * vn[act_o]
            gw_from_negs = (vn[act_o] / nv[act_o, None]).sum(axis=0) / nw - (float(cn[act_o].sum()) / nw**2) * w
        else:
            act_o = np.zeros(0, dtype=bool)
            g_negs_o = np.zeros((0, words.shape[1]))
            gw_from_negs = 0.0

        if k_word:
            wnegs = word_negs[t]
            for j in range(k_word):
                _, used = _ensure_row(words, int(wnegs[j]), jitter, used)
            un = words[wnegs]
            nu = np.linalg.norm(un, axis=1)
            dn = _clip((un @ o) / (nu * no))
            sterms = margin - cpos + dn
            act_w = sterms > 0.0
            b = int(act_w.sum())
            pair_loss += float(sterms[act_w].sum())
            n_active += b
            g_negs_w = o[None, :] / (nu[act_w, None] * no) - (dn[act_w, None] / nu[act_w, None] ** 2) * un[act_w]
            go_from_negs = (un[act_w] / nu[act_w, None]).sum(axis=0) / no - (float(dn[act_w].sum()) / no**2) * o
        else:
            act_w = np.zeros(0, dtype=bool)
            g_negs_w = np.zeros((0, words.shape[1]))
            go_from_negs = 0.0

        total += float(weights[t]) * pair_loss
        if n_active == 0:
            continue

        gcw = o / (nw * no) - (cpos / nw**2) * w
        gcv = w / (nw * no) - (cpos / no**2) * o
        g_w = -n_active * gcw + gw_from_negs
        g_o = -n_active * gcv + go_from_negs

        scale = lr * float(weights[t])
        words[wi] -= scale * g_w
        if train_projection:
            # chain rule through o = P f: dL/dP = (dL/d o) f^T, likewise
            # for each active object negative
            g_proj = np.outer(g_o, f_pos)
            if k_obj and act_o.any():
                g_proj += g_negs_o.T @ f_negs[act_o]
            proj -= scale * g_proj
        if k_word and act_w.any():
            np.subtract.at(words, word_negs[t][act_w], scale * g_negs_w)

    return total, used
