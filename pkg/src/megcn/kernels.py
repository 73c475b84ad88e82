"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``cbow_epoch``, ``spmm_stack``) are bound to one flavour at
import time according to :data:`megcn._accel.USE_NUMBA`. Both flavours stay
importable under their private names so tests and the benchmark can compare
them directly.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit, prange


# --------------------------------------------------------------------------
# CBOW / PV-DM with negative sampling
# --------------------------------------------------------------------------


@njit
def _sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit
def _cbow_epoch_numba(syn0, syn1, tokens, offsets, doc_rows, negatives, window,
                      use_mean, lr_start, lr_end, step, total_steps):
    dim = syn0.shape[1]
    k = negatives.shape[1]
    h = np.empty(dim, dtype=syn0.dtype)
    neu1e = np.empty(dim, dtype=syn0.dtype)
    n_docs = offsets.shape[0] - 1
    for d in range(n_docs):
        start = offsets[d]
        end = offsets[d + 1]
        drow = doc_rows[d]
        for p in range(start, end):
            lr = lr_start - (lr_start - lr_end) * (step / total_steps)
            step += 1
            lo = max(start, p - window)
            hi = min(end, p + window + 1)
            n_ctx = (hi - lo) - 1
            if n_ctx == 0 and drow < 0:
                continue
            for j in range(dim):
                h[j] = 0.0
            count = 0
            if drow >= 0:
                for j in range(dim):
                    h[j] += syn0[drow, j]
                count += 1
            for q in range(lo, hi):
                if q == p:
                    continue
                w = tokens[q]
                for j in range(dim):
                    h[j] += syn0[w, j]
                count += 1
            if use_mean:
                for j in range(dim):
                    h[j] /= count
            for j in range(dim):
                neu1e[j] = 0.0
            for n in range(k + 1):
                if n == 0:
                    target = tokens[p]
                    label = 1.0
                else:
                    target = negatives[p, n - 1]
                    label = 0.0
                f = 0.0
                for j in range(dim):
                    f += h[j] * syn1[target, j]
                g = (label - _sigmoid_scalar(f)) * lr
                for j in range(dim):
                    neu1e[j] += g * syn1[target, j]
                for j in range(dim):
                    syn1[target, j] += g * h[j]
            if use_mean:
                for j in range(dim):
                    neu1e[j] /= count
            if drow >= 0:
                for j in range(dim):
                    syn0[drow, j] += neu1e[j]
            for q in range(lo, hi):
                if q == p:
                    continue
                w = tokens[q]
                for j in range(dim):
                    syn0[w, j] += neu1e[j]
    return step


def _sigmoid(x):
    return _sigmoid_scalar.py_func(x) if hasattr(_sigmoid_scalar, "py_func") else _sigmoid_scalar(x)


def _cbow_epoch_numpy(syn0, syn1, tokens, offsets, doc_rows, negatives, window,
                      use_mean, lr_start, lr_end, step, total_steps):
    n_docs = offsets.shape[0] - 1
    k = negatives.shape[1]
    for d in range(n_docs):
        start, end = int(offsets[d]), int(offsets[d + 1])
        drow = int(doc_rows[d])
        for p in range(start, end):
            lr = lr_start - (lr_start - lr_end) * (step / total_steps)
            step += 1
            lo, hi = max(start, p - window), min(end, p + window + 1)
            ctx = np.concatenate((tokens[lo:p], tokens[p + 1:hi]))
            if ctx.size == 0 and drow < 0:
                continue
            rows = np.concatenate(([drow], ctx)) if drow >= 0 else ctx
            h = np.zeros(syn0.shape[1], dtype=syn0.dtype)
            for r in rows:
                h += syn0[r]
            if use_mean:
                h /= rows.size
            neu1e = np.zeros_like(h)
            for n in range(k + 1):
                target = tokens[p] if n == 0 else negatives[p, n - 1]
                label = 1.0 if n == 0 else 0.0
                g = (label - _sigmoid(float(h @ syn1[target]))) * lr
                neu1e += g * syn1[target]
                syn1[target] += g * h
            if use_mean:
                neu1e /= rows.size
            np.add.at(syn0, rows, neu1e)
    return step


# --------------------------------------------------------------------------
# Stacked CSR x dense products: out[t] = A_t @ Y[t], all A_t sharing one
# sparsity pattern (indptr, indices) with per-stream values[t].
# --------------------------------------------------------------------------


@njit(parallel=True)
def _spmm_stack_numba(indptr, indices, values, Y):
    n_streams, n_rows_y, width = Y.shape
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_streams, n_rows, width), dtype=Y.dtype)
    for flat in prange(n_streams * n_rows):
        t = flat // n_rows
        i = flat - t * n_rows
        vt = values[t] if values.shape[0] > 1 else values[0]
        for ptr in range(indptr[i], indptr[i + 1]):
            a = vt[ptr]
            col = indices[ptr]
            for j in range(width):
                out[t, i, j] += a * Y[t, col, j]
    return out


def _spmm_stack_numpy(indptr, indices, values, Y):
    n_streams, _, width = Y.shape
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_streams, n_rows, width), dtype=Y.dtype)
    counts = np.diff(indptr)
    nonempty = counts > 0
    if not nonempty.any():
        return out
    starts = indptr[:-1][nonempty]
    for t in range(n_streams):
        vt = values[t] if values.shape[0] > 1 else values[0]
        prod = vt[:, None] * Y[t][indices]
        out[t, nonempty] = np.add.reduceat(prod, starts, axis=0)
    return out


if USE_NUMBA:
    cbow_epoch = _cbow_epoch_numba
    spmm_stack = _spmm_stack_numba
else:
    cbow_epoch = _cbow_epoch_numpy
    spmm_stack = _spmm_stack_numpy
