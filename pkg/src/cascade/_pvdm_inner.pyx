# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hierarchical-softmax window kernel.

Hot loop of document-vector training: for each window position, averages the
document vector with the context word vectors, walks the target's Huffman
path, and applies the SGD update. float32 tables, float64 accumulation,
mirroring :mod:`cascade._pvdm_pure` exactly. Releases the GIL so the
optional multi-threaded training mode can overlap document passes.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) noexcept nogil:
    # log(1 + exp(x)), overflow-safe
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


def train_document(cnp.float32_t[:, ::1] doc_vectors,
                   cnp.float32_t[:, ::1] word_vectors,
                   cnp.float32_t[:, ::1] node_vectors,
                   Py_ssize_t doc_row,
                   cnp.int32_t[::1] tokens,
                   cnp.uint8_t[::1] codes,
                   cnp.int32_t[::1] points,
                   cnp.int64_t[::1] offsets,
                   int window,
                   bint use_edges,
                   double alpha_hi,
                   double alpha_lo,
                   long long counter,
                   long long total,
                   bint learn_words,
                   bint learn_hidden):
    """One pass over one document; same contract as the pure kernel."""
    cdef Py_ssize_t n = tokens.shape[0]
    cdef Py_ssize_t d = word_vectors.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] h_arr = np.empty(d, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] neu1e_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] h = h_arr
    cdef double[::1] neu1e = neu1e_arr
    cdef double loss = 0.0
    cdef double alpha, f, g, sgn, delta
    cdef long long n_pred = 0
    cdef Py_ssize_t start, stop, t, cs, ce, c, i, j, m, target, node
    cdef cnp.int64_t lo, hi

    if use_edges:
        start, stop = 0, n
    else:
        start, stop = window, n - window

    with nogil:
        for t in range(start, stop):
            alpha = alpha_hi + (alpha_lo - alpha_hi) * (<double> counter / <double> total)
            counter += 1
            target = tokens[t]
            lo = offsets[target]
            hi = offsets[target + 1]
            if lo == hi:  # no tree path (zero-count token); context-only role
                continue
            cs = t - window
            if cs < 0:
                cs = 0
            ce = t + window + 1
            if ce > n:
                ce = n
            m = ce - cs  # includes the doc vector, excludes the target
            for i in range(d):
                h[i] = doc_vectors[doc_row, i]
            for c in range(cs, ce):
                if c == t:
                    continue
                for i in range(d):
                    h[i] += word_vectors[tokens[c], i]
            for i in range(d):
                h[i] /= m
                neu1e[i] = 0.0
            n_pred += 1
            for j in range(lo, hi):
                node = points[j]
                f = 0.0
                for i in range(d):
                    f += h[i] * node_vectors[node, i]
                sgn = 1.0 - 2.0 * codes[j]
                loss += _softplus(-sgn * f)
                g = (1.0 - codes[j] - _sigmoid(f)) * alpha
                for i in range(d):
                    neu1e[i] += g * node_vectors[node, i]
                if learn_hidden:
                    for i in range(d):
                        node_vectors[node, i] = <cnp.float32_t> (node_vectors[node, i] + g * h[i])
            for i in range(d):
                delta = neu1e[i] / m
                doc_vectors[doc_row, i] = <cnp.float32_t> (doc_vectors[doc_row, i] + delta)
            if learn_words:
                for c in range(cs, ce):
                    if c == t:
                        continue
                    for i in range(d):
                        word_vectors[tokens[c], i] = <cnp.float32_t> (
                            word_vectors[tokens[c], i] + neu1e[i] / m)
    return loss, n_pred, counter
