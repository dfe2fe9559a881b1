# cython: language_level=3
"""Compiled training kernels.

Same contract as xslearn._fallback (see its module docstring): per-pair
hinge updates with gradients taken at pre-update parameters and applied
in a fixed order. Accumulation order inside dot products differs from
numpy's pairwise summation, so trajectories agree with the fallback to
rounding (~1e-12 relative), not bitwise.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

ctypedef cnp.int64_t i64


cdef inline double _clamp(double x) noexcept:
    if x > 1.0:
        return 1.0
    if x < -1.0:
        return -1.0
    return x


cdef inline double _row_norm(double[:, ::1] t, Py_ssize_t i) noexcept:
    cdef Py_ssize_t k, d = t.shape[1]
    cdef double s = 0.0
    for k in range(d):
        s += t[i, k] * t[i, k]
    return sqrt(s)


cdef inline double _dot_rows(double[:, ::1] a, Py_ssize_t i, double[:, ::1] b, Py_ssize_t j) noexcept:
    cdef Py_ssize_t k, d = a.shape[1]
    cdef double s = 0.0
    for k in range(d):
        s += a[i, k] * b[j, k]
    return s


cdef double _ensure(double[:, ::1] t, Py_ssize_t i, double[:, ::1] jitter, Py_ssize_t* used) except -1.0:
    # Zero-norm guard: replace a collapsed row with the next jitter row.
    cdef double n = _row_norm(t, i)
    cdef Py_ssize_t k, d = t.shape[1]
    if n == 0.0:
        if used[0] >= jitter.shape[0]:
            raise RuntimeError("jitter pool exhausted; too many zero-norm rows in one epoch")
        for k in range(d):
            t[i, k] = jitter[used[0], k]
        used[0] += 1
        n = _row_norm(t, i)
    return n


def train_epoch_tables(double[:, ::1] words, double[:, ::1] objects,
                       i64[::1] pair_words, i64[::1] pair_objects,
                       i64[:, ::1] obj_negs, i64[:, ::1] word_negs,
                       double[::1] weights, double lr, double margin,
                       double[:, ::1] jitter):
    """One epoch over embedding tables; words and objects updated in place."""
    cdef Py_ssize_t n_pairs = pair_words.shape[0]
    cdef Py_ssize_t k_obj = obj_negs.shape[1]
    cdef Py_ssize_t k_word = word_negs.shape[1]
    cdef Py_ssize_t d = words.shape[1]
    cdef Py_ssize_t used = 0
    cdef double total = 0.0

    cdef double[::1] gw = np.empty(d)
    cdef double[::1] go = np.empty(d)
    cdef double[:, ::1] gno = np.empty((k_obj if k_obj > 0 else 1, d))
    cdef double[:, ::1] gnw = np.empty((k_word if k_word > 0 else 1, d))
    cdef double[::1] cj = np.empty(k_obj if k_obj > 0 else 1)
    cdef double[::1] nvj = np.empty(k_obj if k_obj > 0 else 1)
    cdef double[::1] dj = np.empty(k_word if k_word > 0 else 1)
    cdef double[::1] nuj = np.empty(k_word if k_word > 0 else 1)
    cdef unsigned char[::1] act_o = np.zeros(k_obj if k_obj > 0 else 1, dtype=np.uint8)
    cdef unsigned char[::1] act_w = np.zeros(k_word if k_word > 0 else 1, dtype=np.uint8)

    cdef Py_ssize_t t, j, k, wi, oi, nid, mid, n_active
    cdef double nw, no, cpos, c, term, pair_loss, scale, sum_cj, sum_dj

    for t in range(n_pairs):
        wi = pair_words[t]
        oi = pair_objects[t]
        nw = _ensure(words, wi, jitter, &used)
        no = _ensure(objects, oi, jitter, &used)
        cpos = _clamp(_dot_rows(words, wi, objects, oi) / (nw * no))

        pair_loss = 0.0
        n_active = 0
        sum_cj = 0.0
        sum_dj = 0.0

        for j in range(k_obj):
            nid = obj_negs[t, j]
            nvj[j] = _ensure(objects, nid, jitter, &used)
            c = _clamp(_dot_rows(words, wi, objects, nid) / (nw * nvj[j]))
            cj[j] = c
            term = margin - cpos + c
            if term > 0.0:
                act_o[j] = 1
                n_active += 1
                pair_loss += term
                sum_cj += c
            else:
                act_o[j] = 0

        for j in range(k_word):
            mid = word_negs[t, j]
            nuj[j] = _ensure(words, mid, jitter, &used)
            c = _clamp(_dot_rows(words, mid, objects, oi) / (nuj[j] * no))
            dj[j] = c
            term = margin - cpos + c
            if term > 0.0:
                act_w[j] = 1
                n_active += 1
                pair_loss += term
                sum_dj += c
            else:
                act_w[j] = 0

        total += weights[t] * pair_loss
        if n_active == 0:
            continue

        # all gradients from pre-update rows, then apply
        for k in range(d):
            gw[k] = -n_active * (objects[oi, k] / (nw * no) - cpos * words[wi, k] / (nw * nw))
            go[k] = -n_active * (words[wi, k] / (nw * no) - cpos * objects[oi, k] / (no * no))
        for j in range(k_obj):
            if act_o[j]:
                nid = obj_negs[t, j]
                for k in range(d):
                    gno[j, k] = words[wi, k] / (nw * nvj[j]) - cj[j] * objects[nid, k] / (nvj[j] * nvj[j])
                    gw[k] += objects[nid, k] / (nw * nvj[j])
        if sum_cj != 0.0:
            for k in range(d):
                gw[k] -= sum_cj * words[wi, k] / (nw * nw)
        for j in range(k_word):
            if act_w[j]:
                mid = word_negs[t, j]
                for k in range(d):
                    gnw[j, k] = objects[oi, k] / (nuj[j] * no) - dj[j] * words[mid, k] / (nuj[j] * nuj[j])
                    go[k] += words[mid, k] / (nuj[j] * no)
        if sum_dj != 0.0:
            for k in range(d):
                go[k] -= sum_dj * objects[oi, k] / (no * no)

        scale = lr * weights[t]
        for k in range(d):
            words[wi, k] -= scale * gw[k]
        for k in range(d):
            objects[oi, k] -= scale * go[k]
        for j in range(k_obj):
            if act_o[j]:
                nid = obj_negs[t, j]
                for k in range(d):
                    objects[nid, k] -= scale * gno[j, k]
        for j in range(k_word):
            if act_w[j]:
                mid = word_negs[t, j]
                for k in range(d):
                    words[mid, k] -= scale * gnw[j, k]

    return total, used


cdef void _encode(double[:, ::1] proj, double[:, ::1] feats, Py_ssize_t row, double[::1] out) noexcept:
    cdef Py_ssize_t k, f, d = proj.shape[0], nf = proj.shape[1]
    cdef double s
    for k in range(d):
        s = 0.0
        for f in range(nf):
            s += proj[k, f] * feats[row, f]
        out[k] = s


cdef inline double _vec_norm(double[::1] v) noexcept:
    cdef Py_ssize_t k, d = v.shape[0]
    cdef double s = 0.0
    for k in range(d):
        s += v[k] * v[k]
    return sqrt(s)


cdef inline double _dot_row_vec(double[:, ::1] a, Py_ssize_t i, double[::1] v) noexcept:
    cdef Py_ssize_t k, d = v.shape[0]
    cdef double s = 0.0
    for k in range(d):
        s += a[i, k] * v[k]
    return s


def train_epoch_projection(double[:, ::1] words, double[:, ::1] proj, double[:, ::1] feats,
                           i64[::1] pair_words, i64[::1] pair_objects,
                           i64[:, ::1] obj_negs, i64[:, ::1] word_negs,
                           double[::1] weights, double lr, double margin,
                           double[:, ::1] jitter, bint train_projection=True):
    """One epoch with objects encoded as proj @ feature row."""
    cdef Py_ssize_t n_pairs = pair_words.shape[0]
    cdef Py_ssize_t k_obj = obj_negs.shape[1]
    cdef Py_ssize_t k_word = word_negs.shape[1]
    cdef Py_ssize_t d = words.shape[1]
    cdef Py_ssize_t nf = feats.shape[1]
    cdef Py_ssize_t used = 0
    cdef double total = 0.0

    cdef double[::1] enc_o = np.empty(d)
    cdef double[:, ::1] enc_n = np.empty((k_obj if k_obj > 0 else 1, d))
    cdef double[::1] gw = np.empty(d)
    cdef double[::1] go = np.empty(d)
    cdef double[:, ::1] gno = np.empty((k_obj if k_obj > 0 else 1, d))
    cdef double[:, ::1] gnw = np.empty((k_word if k_word > 0 else 1, d))
    cdef double[::1] cj = np.empty(k_obj if k_obj > 0 else 1)
    cdef double[::1] nvj = np.empty(k_obj if k_obj > 0 else 1)
    cdef double[::1] dj = np.empty(k_word if k_word > 0 else 1)
    cdef double[::1] nuj = np.empty(k_word if k_word > 0 else 1)
    cdef unsigned char[::1] act_o = np.zeros(k_obj if k_obj > 0 else 1, dtype=np.uint8)
    cdef unsigned char[::1] act_w = np.zeros(k_word if k_word > 0 else 1, dtype=np.uint8)

    cdef Py_ssize_t t, j, k, f, wi, oi, nid, mid, n_active
    cdef double nw, no, cpos, c, term, pair_loss, scale, sum_cj, sum_dj

    for t in range(n_pairs):
        wi = pair_words[t]
        oi = pair_objects[t]
        nw = _ensure(words, wi, jitter, &used)
        _encode(proj, feats, oi, enc_o)
        no = _vec_norm(enc_o)
        if no == 0.0:
            raise ValueError(f"object {oi} has a zero-norm encoding under the current projection")
        cpos = _clamp(_dot_row_vec(words, wi, enc_o) / (nw * no))

        pair_loss = 0.0
        n_active = 0
        sum_cj = 0.0
        sum_dj = 0.0

        for j in range(k_obj):
            nid = obj_negs[t, j]
            _encode(proj, feats, nid, enc_n[j])
            nvj[j] = _vec_norm(enc_n[j])
            if nvj[j] == 0.0:
                raise ValueError(f"object {nid} has a zero-norm encoding under the current projection")
            c = _clamp(_dot_row_vec(words, wi, enc_n[j]) / (nw * nvj[j]))
            cj[j] = c
            term = margin - cpos + c
            if term > 0.0:
                act_o[j] = 1
                n_active += 1
                pair_loss += term
                sum_cj += c
            else:
                act_o[j] = 0

        for j in range(k_word):
            mid = word_negs[t, j]
            nuj[j] = _ensure(words, mid, jitter, &used)
            c = _clamp(_dot_row_vec(words, mid, enc_o) / (nuj[j] * no))
            dj[j] = c
            term = margin - cpos + c
            if term > 0.0:
                act_w[j] = 1
                n_active += 1
                pair_loss += term
                sum_dj += c
            else:
                act_w[j] = 0

        total += weights[t] * pair_loss
        if n_active == 0:
            continue

        for k in range(d):
            gw[k] = -n_active * (enc_o[k] / (nw * no) - cpos * words[wi, k] / (nw * nw))
            go[k] = -n_active * (words[wi, k] / (nw * no) - cpos * enc_o[k] / (no * no))
        for j in range(k_obj):
            if act_o[j]:
                for k in range(d):
                    gno[j, k] = words[wi, k] / (nw * nvj[j]) - cj[j] * enc_n[j, k] / (nvj[j] * nvj[j])
                    gw[k] += enc_n[j, k] / (nw * nvj[j])
        if sum_cj != 0.0:
            for k in range(d):
                gw[k] -= sum_cj * words[wi, k] / (nw * nw)
        for j in range(k_word):
            if act_w[j]:
                mid = word_negs[t, j]
                for k in range(d):
                    gnw[j, k] = enc_o[k] / (nuj[j] * no) - dj[j] * words[mid, k] / (nuj[j] * nuj[j])
                    go[k] += words[mid, k] / (nuj[j] * no)
        if sum_dj != 0.0:
            for k in range(d):
                go[k] -= sum_dj * enc_o[k] / (no * no)

        scale = lr * weights[t]
        for k in range(d):
            words[wi, k] -= scale * gw[k]
        if train_projection:
            # dL/dP = (dL/d enc) f^T for the positive and each active negative
            for k in range(d):
                for f in range(nf):
                    proj[k, f] -= scale * go[k] * feats[oi, f]
            for j in range(k_obj):
                if act_o[j]:
                    nid = obj_negs[t, j]
                    for k in range(d):
                        for f in range(nf):
                            proj[k, f] -= scale * gno[j, k] * feats[nid, f]
        for j in range(k_word):
            if act_w[j]:
                mid = word_negs[t, j]
                for k in range(d):
                    words[mid, k] -= scale * gnw[j, k]

    return total, used
