"""Independent dense reference implementations used by the tests.

Nothing here calls into the package's sparse or kernel code, so agreement
with the package is evidence rather than tautology.
"""

import math

import numpy as np

from megcn.graph import MultiEdgeGraph, _normalize_pattern


def dense_normalize(A):
    """D^-1/2 (A + I) D^-1/2 written the textbook way."""
    A_hat = A + np.eye(A.shape[0])
    d = A_hat.sum(axis=1)
    D = np.diag(1.0 / np.sqrt(d))
    return D @ A_hat @ D


def random_symmetric(rng, n, density=0.4, low=0.05, high=1.0):
    """Nonnegative symmetric matrix, zero diagonal."""
    mask = np.triu(rng.random((n, n)) < density, k=1)
    vals = rng.uniform(low, high, (n, n)) * mask
    return vals + vals.T


def random_graph(rng, n_nodes, T, n_words=None, density=0.4):
    """Small MultiEdgeGraph with random weights on one shared support."""
    n_words = n_nodes // 2 if n_words is None else n_words
    support = np.triu(rng.random((n_nodes, n_nodes)) < density, k=1)
    support = support | support.T
    rows, cols = np.nonzero(support)
    values = np.empty((T, rows.size))
    for t in range(T):
        W = np.triu(rng.uniform(0.05, 1.0, (n_nodes, n_nodes)), k=1)
        W = W + W.T
        values[t] = W[rows, cols]
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_nodes), out=indptr[1:])
    nptr, nidx, nval = _normalize_pattern(indptr, cols.astype(np.int64), values, n_nodes)
    feats = rng.normal(size=(n_nodes, T))
    return MultiEdgeGraph(n_words, n_nodes - n_words, indptr, cols.astype(np.int64), values,
                          nptr, nidx, nval, feats)


def dense_adjacency(graph, t):
    A = np.zeros((graph.n_nodes, graph.n_nodes))
    rows = np.repeat(np.arange(graph.n_nodes), np.diff(graph.indptr))
    A[rows, graph.indices] = graph.values[t]
    return A


def dense_forward(graph, weights, pooling, masks=None, activation="relu", slope=0.01, A_norm=None):
    """Layer-by-layer forward pass with dense matrices and python loops."""
    T = graph.dims
    if A_norm is None:
        A_norm = [dense_normalize(dense_adjacency(graph, t)) for t in range(T)]
    X = graph.node_features
    L = len(weights)
    for layer, W in enumerate(weights):
        if masks is not None and masks[layer] is not None:
            X = X * masks[layer]
        outs = []
        for t in range(T):
            Wt = W[t] if W.shape[0] == T else W[0]
            outs.append(A_norm[t] @ X @ Wt)
        if layer < L - 1:
            if activation == "relu":
                outs = [np.maximum(o, 0.0) for o in outs]
            else:
                outs = [np.where(o > 0, o, slope * o) for o in outs]
            X = np.hstack(outs)
        else:
            stack = np.stack(outs)
            if pooling == "max":
                return stack.max(axis=0), outs
            if pooling == "min":
                return stack.min(axis=0), outs
            return stack.mean(axis=0), outs
    raise AssertionError("unreachable")


def dense_xent(logits, labels, mask):
    total = 0.0
    for i in mask:
        row = logits[i]
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        total += lse - row[labels[i]]
    return total / len(mask)


def brute_pairs(docs, window):
    """Distinct word-id pairs (i < j) within ``window`` positions."""
    out = set()
    for toks in docs:
        for p, a in enumerate(toks):
            for q in range(p + 1, min(len(toks), p + window + 1)):
                b = toks[q]
                if a != b:
                    out.add((min(a, b), max(a, b)))
    return out


def brute_tfidf(docs, n_words, variant="raw"):
    K = len(docs)
    M = np.zeros((n_words, K))
    for k, toks in enumerate(docs):
        for w in toks:
            M[w, k] += 1
    for w in range(n_words):
        df = sum(1 for toks in docs if w in toks)
        if variant == "raw":
            idf = math.log(K / df) if df else 0.0
        else:
            idf = math.log((1 + K) / (1 + df)) + 1.0
        M[w] *= idf
    return M


def relative_error(a, b, floor=1e-8):
    """Max-abs difference over the larger max-abs magnitude of the two."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), floor))


def _kink_margin(graph, weights, pooling, A_norm, masks):
    """Smallest distance of any hidden pre-activation from 0 and of any
    max/min pooling winner from the runner-up."""
    T = graph.dims
    X = graph.node_features
    margin = np.inf
    for layer, W in enumerate(weights):
        if masks is not None and masks[layer] is not None:
            X = X * masks[layer]
        outs = [A_norm[t] @ X @ (W[t] if W.shape[0] == T else W[0]) for t in range(T)]
        if layer < len(weights) - 1:
            margin = min(margin, min(np.abs(o).min() for o in outs))
            X = np.hstack([np.maximum(o, 0.0) for o in outs])
        elif pooling != "avg" and T > 1:
            s = np.sort(np.stack(outs), axis=0)
            margin = min(margin, float((s[-1] - s[-2]).min() if pooling == "max" else (s[1] - s[0]).min()))
    return margin


def gradient_check(rng, pooling, mode, with_dropout=False, n_layers=2, activation="relu",
                   h=1e-6, min_margin=1e-4, max_tries=50):
    """Analytic vs central-difference gradients on one random instance.

    Returns ``(max relative error over weight tensors, resamples)``. The
    numeric side uses only :func:`dense_forward` and :func:`dense_xent`.
    Instances with a ReLU input or pooling gap below ``min_margin`` are
    redrawn because the loss is not differentiable there.
    """
    from megcn.model import TrainConfig, init_params, loss_and_grads

    for attempt in range(max_tries):
        n = int(rng.integers(3, 11))
        T = int(rng.integers(1, 5))
        C = int(rng.integers(2, 4))
        d_ms = int(rng.integers(1, 4))
        graph = random_graph(rng, n, T, n_words=int(rng.integers(0, n)))
        cfg = TrainConfig(T=T, d_ms=d_ms, pooling=pooling, mode=mode, dropout=0.0, n_layers=n_layers,
                          activation=activation, seed=int(rng.integers(1 << 30)))
        params = init_params(cfg, T, C)
        labels = rng.integers(0, C, n)
        mask = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
        masks = None
        if with_dropout:
            masks = [(rng.random((n, W.shape[1])) < 0.7) / 0.7 for W in params.weights]
        A_norm = [dense_normalize(dense_adjacency(graph, t)) for t in range(T)]
        if _kink_margin(graph, params.weights, pooling, A_norm, masks) < min_margin:
            continue
        _, grads = loss_and_grads(graph, params, cfg, labels, mask, masks)

        def loss():
            logits, _ = dense_forward(graph, params.weights, pooling, masks, activation, A_norm=A_norm)
            return dense_xent(logits, labels, mask)

        worst = 0.0
        for W, G in zip(params.weights, grads):
            num = np.zeros_like(W)
            for idx in np.ndindex(W.shape):
                old = W[idx]
                W[idx] = old + h
                up = loss()
                W[idx] = old - h
                down = loss()
                W[idx] = old
                num[idx] = (up - down) / (2 * h)
            worst = max(worst, relative_error(G, num))
        return worst, attempt
    raise RuntimeError("could not draw an instance away from kinks")
