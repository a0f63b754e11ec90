"""Pure-numpy hierarchical-softmax window kernel.

Fallback for :mod:`cascade._pvdm_inner`; same contract, same math (float32
tables, float64 accumulation), roughly 30-50x slower. Kept in lockstep with
the compiled version -- any change here must be mirrored there.
"""
from __future__ import annotations

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def train_document(doc_vectors, word_vectors, node_vectors, doc_row, tokens,
                   codes, points, offsets, window, use_edges, alpha_hi, alpha_lo,
                   counter, total, learn_words, learn_hidden):
    """One pass over one document; updates tables in place.

    Returns ``(loss_sum, n_predicted, counter)`` where ``loss_sum`` is the
    summed negative log probability (natural log) of the predicted targets
    and ``counter`` the advanced global window counter driving the linear
    learning-rate decay from ``alpha_hi`` to ``alpha_lo`` over ``total``.
    """
    n = len(tokens)
    loss = 0.0
    n_pred = 0
    if use_edges:
        start, stop = 0, n
    else:
        start, stop = window, n - window
    for t in range(start, stop):
        alpha = alpha_hi + (alpha_lo - alpha_hi) * (counter / total)
        counter += 1
        target = tokens[t]
        lo, hi = offsets[target], offsets[target + 1]
        if lo == hi:  # no tree path (zero-count token); context-only role
            continue
        cs = max(0, t - window)
        ce = min(n, t + window + 1)
        ctx = np.concatenate((tokens[cs:t], tokens[t + 1:ce]))
        m = 1 + len(ctx)
        dv = doc_vectors[doc_row].astype(np.float64)
        h = dv.copy()
        if len(ctx):
            h += word_vectors[ctx].astype(np.float64).sum(axis=0)
        h /= m
        path = points[lo:hi]
        code = codes[lo:hi].astype(np.float64)
        l2 = node_vectors[path].astype(np.float64)
        f = l2 @ h
        loss += float(np.logaddexp(0.0, -(1.0 - 2.0 * code) * f).sum())
        n_pred += 1
        g = (1.0 - code - _sigmoid(f)) * alpha
        neu1e = g @ l2
        if learn_hidden:
            node_vectors[path] = (l2 + np.outer(g, h)).astype(np.float32)
        delta = neu1e / m
        doc_vectors[doc_row] = (dv + delta).astype(np.float32)
        if learn_words and len(ctx):
            np.add.at(word_vectors, ctx, delta)
    return loss, n_pred, counter
