"""Word/document graph with T-dimensional edge weights.

Node ids 0..U-1 are words, U..U+K-1 documents. All T adjacency matrices
share one sparsity pattern, so the graph stores a single ``indptr``/
``indices`` pair and a ``(T, nnz)`` value array.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from ._io import npz_bytes
from .errors import ShapeMismatch
from .sparse import SparseMatrix

EPS = 1e-12
PRUNE = 1e-6


@dataclass(frozen=True)
class CooccurrenceIndex:
    pairs: np.ndarray  # (m, 2), i < j, lexicographically sorted
    window: int | None

    def __len__(self):
        return self.pairs.shape[0]

    def as_set(self):
        return {(int(i), int(j)) for i, j in self.pairs}


def cooccurrence_pairs(corpus, window=5, mode="window"):
    """Word pairs appearing within ``window`` positions in some document.

    ``mode="all"`` connects every pair of distinct words instead (only
    sensible for tiny vocabularies).
    """
    n = corpus.n_words
    if mode == "all":
        i, j = np.triu_indices(n, k=1)
        return CooccurrenceIndex(np.stack([i, j], axis=1).astype(np.int64), None)
    if mode != "window":
        raise ValueError(f"unknown pair mode {mode!r}")
    flat, offsets = corpus.flat_tokens()
    doc_of = np.repeat(np.arange(corpus.n_docs), np.diff(offsets))
    codes = []
    for o in range(1, window + 1):
        if o >= flat.size:
            break
        a, b = flat[:-o], flat[o:]
        keep = (doc_of[:-o] == doc_of[o:]) & (a != b)
        lo, hi = np.minimum(a[keep], b[keep]), np.maximum(a[keep], b[keep])
        codes.append(lo * n + hi)
    codes = np.unique(np.concatenate(codes)) if codes else np.zeros(0, dtype=np.int64)
    return CooccurrenceIndex(np.stack([codes // n, codes % n], axis=1).astype(np.int64), window)


def edge_weight(diff, eps=EPS):
    """tanh(1 / |diff|) with the distance clamped below at ``eps``."""
    return np.tanh(1.0 / np.maximum(np.abs(diff), eps))


def _pair_weights(emb, pairs, eps, prune):
    """(T, m) weights for index pairs; a pair is dropped only when every
    dimension falls below ``prune`` so the support stays shared."""
    w = edge_weight(emb[pairs[:, 0]] - emb[pairs[:, 1]], eps).T
    keep = (w >= prune).any(axis=0)
    return pairs[keep], np.ascontiguousarray(w[:, keep])


def _symmetric_stack(pairs, weights, n):
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    return [SparseMatrix.from_coo(rows, cols, np.concatenate([w, w]), (n, n)) for w in weights]


def word_word_edges(word_emb, pairs, eps=EPS, prune=PRUNE):
    """T symmetric U x U matrices, one per embedding dimension."""
    values = getattr(word_emb, "values", word_emb)
    p, w = _pair_weights(values, pairs.pairs if hasattr(pairs, "pairs") else np.asarray(pairs), eps, prune)
    return _symmetric_stack(p, w, values.shape[0])


def doc_overlap_counts(corpus):
    """K x K counts of distinct vocabulary ids shared by two documents
    (diagonal excluded)."""
    rows = np.concatenate([np.full(len(d.tokens), d.id) for d in corpus.docs])
    cols = np.concatenate([d.tokens for d in corpus.docs])
    b = sp.csr_matrix((np.ones(rows.size, dtype=np.int64), (rows, cols)),
                      shape=(corpus.n_docs, corpus.n_words))
    b.sum_duplicates()
    b.data[:] = 1
    overlap = (b @ b.T).tocsr()
    overlap.setdiag(0)
    return SparseMatrix.from_scipy(overlap)


def doc_doc_edges(doc_emb, overlaps, u=5, eps=EPS, prune=PRUNE):
    """T symmetric K x K matrices over document pairs sharing >= u words."""
    values = getattr(doc_emb, "values", doc_emb)
    r = overlaps.row_indices()
    keep = (overlaps.data >= u) & (r < overlaps.indices)
    pairs = np.stack([r[keep], overlaps.indices[keep]], axis=1).astype(np.int64)
    p, w = _pair_weights(values, pairs, eps, prune)
    return _symmetric_stack(p, w, values.shape[0])


def tfidf(corpus, variant="raw"):
    """U x K word-document weights: count * ln(K / df).

    ``variant="smooth"`` uses ln((1 + K) / (1 + df)) + 1, which never
    vanishes.
    """
    n_words, n_docs = corpus.n_words, corpus.n_docs
    cols = np.concatenate([np.full(len(d.tokens), d.id) for d in corpus.docs])
    rows = np.concatenate([d.tokens for d in corpus.docs])
    counts = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n_words, n_docs))
    counts.sum_duplicates()
    df = np.diff(counts.indptr).astype(np.float64)
    if variant == "raw":
        idf = np.log(n_docs / np.maximum(df, 1.0))
    elif variant == "smooth":
        idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    else:
        raise ValueError(f"unknown tf-idf variant {variant!r}")
    counts.data *= np.repeat(idf, np.diff(counts.indptr))
    return SparseMatrix.from_scipy(counts)


# --------------------------------------------------------------------------
# normalization
# --------------------------------------------------------------------------


def _normalize_pattern(indptr, indices, values, n):
    """Add self-loops and scale by D^-1/2 on both sides for every stream.

    Returns the new (indptr, indices, values). Entry (i, j) is computed as
    a_ij * (d_i^-1/2 * d_j^-1/2) so mirrored entries are bitwise equal.
    """
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    diag = np.arange(n, dtype=np.int64)
    has_diag = np.zeros(n, dtype=bool)
    on_diag = rows == indices
    has_diag[rows[on_diag]] = True
    add = diag[~has_diag]
    all_rows = np.concatenate([rows, add])
    all_cols = np.concatenate([indices, add])
    vals = np.concatenate([values, np.zeros((values.shape[0], add.size), dtype=values.dtype)], axis=1)
    order = np.lexsort((all_cols, all_rows))
    all_rows, all_cols, vals = all_rows[order], all_cols[order], vals[:, order]
    vals[:, all_rows == all_cols] += 1.0
    new_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(all_rows, minlength=n), out=new_indptr[1:])
    out = np.empty_like(vals)
    for t in range(vals.shape[0]):
        deg = np.bincount(all_rows, weights=vals[t], minlength=n)
        dinv = 1.0 / np.sqrt(deg)
        out[t] = vals[t] * (dinv[all_rows] * dinv[all_cols])
    return new_indptr, all_cols, out


def normalize(adj):
    """D^-1/2 (A + I) D^-1/2 with D the row sums of A + I."""
    if adj.n_rows != adj.n_cols:
        raise ShapeMismatch(f"adjacency must be square, got {adj.shape}")
    indptr, indices, vals = _normalize_pattern(
        adj.indptr, adj.indices, adj.data.astype(np.float64)[None, :], adj.n_rows
    )
    return SparseMatrix(adj.n_rows, adj.n_cols, indptr, indices, vals[0])


# --------------------------------------------------------------------------
# the assembled graph
# --------------------------------------------------------------------------


@dataclass
class MultiEdgeGraph:
    n_words: int
    n_docs: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray  # (T, nnz) raw weights
    norm_indptr: np.ndarray
    norm_indices: np.ndarray
    norm_values: np.ndarray  # (T, nnz') normalized, self-loops included
    node_features: np.ndarray  # (N, T)

    @property
    def n_nodes(self):
        return self.n_words + self.n_docs

    @property
    def dims(self):
        return self.values.shape[0]

    def adjacency(self, t):
        return SparseMatrix(self.n_nodes, self.n_nodes, self.indptr, self.indices, self.values[t])

    def normalized(self, t):
        return SparseMatrix(self.n_nodes, self.n_nodes, self.norm_indptr, self.norm_indices,
                            self.norm_values[t])

    def propagate(self, Y):
        """out[t] = normalized(t) @ Y[t] for a (T, N, d) stack."""
        vals = self.norm_values
        if vals.dtype != Y.dtype:
            vals = vals.astype(Y.dtype)
        return kernels.spmm_stack(self.norm_indptr, self.norm_indices, vals, Y)

    def propagated_features(self):
        """Cached (T, N, T) stack of normalized(t) @ node_features."""
        cached = self.__dict__.get("_propagated")
        if cached is None:
            X = self.node_features
            cached = self.propagate(np.ascontiguousarray(np.broadcast_to(X, (self.dims,) + X.shape)))
            cached.setflags(write=False)
            self.__dict__["_propagated"] = cached
        return cached

    def astype(self, dtype):
        return MultiEdgeGraph(self.n_words, self.n_docs, self.indptr, self.indices,
                              self.values.astype(dtype), self.norm_indptr, self.norm_indices,
                              self.norm_values.astype(dtype), self.node_features.astype(dtype))

    def permuted(self, perm):
        """The same graph with node ``perm[i]`` renamed to ``i``. Only the
        normalized matrices and features are carried over."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        mats = []
        for t in range(self.dims):
            m = self.normalized(t).to_scipy()[perm][:, perm]
            mats.append(SparseMatrix.from_scipy(m))
        base = mats[0]
        vals = np.stack([m.data for m in mats])
        raw = [SparseMatrix.from_scipy(self.adjacency(t).to_scipy()[perm][:, perm]) for t in range(self.dims)]
        return MultiEdgeGraph(self.n_words, self.n_docs, raw[0].indptr, raw[0].indices,
                              np.stack([m.data for m in raw]) if raw[0].nnz else np.zeros((self.dims, 0)),
                              base.indptr, base.indices, vals, self.node_features[perm])


def _stack_values(mats, name):
    base = mats[0]
    for m in mats[1:]:
        if not (np.array_equal(m.indptr, base.indptr) and np.array_equal(m.indices, base.indices)):
            raise ShapeMismatch(f"{name} matrices must share one sparsity pattern")
    return base.row_indices(), base.indices, np.stack([m.data for m in mats])


def assemble(word_edges, doc_edges, tfidf_matrix, word_emb, doc_emb):
    """Stack the three edge blocks into T symmetric N x N matrices and
    normalize each one."""
    W = getattr(word_emb, "values", word_emb)
    D = getattr(doc_emb, "values", doc_emb)
    U, T = W.shape
    K = D.shape[0]
    if D.shape[1] != T or len(word_edges) != T or len(doc_edges) != T:
        raise ShapeMismatch(
            f"dimension mismatch: word dim {T}, doc dim {D.shape[1]}, "
            f"{len(word_edges)} word and {len(doc_edges)} doc edge matrices"
        )
    if word_edges[0].shape != (U, U) or doc_edges[0].shape != (K, K) or tfidf_matrix.shape != (U, K):
        raise ShapeMismatch(
            f"block shapes {word_edges[0].shape}, {doc_edges[0].shape}, {tfidf_matrix.shape} "
            f"do not fit U={U}, K={K}"
        )
    wr, wc, wv = _stack_values(word_edges, "word-word")
    dr, dc, dv = _stack_values(doc_edges, "doc-doc")
    tr, tc = tfidf_matrix.row_indices(), tfidf_matrix.indices
    tv = np.broadcast_to(tfidf_matrix.data.astype(np.float64), (T, tr.size))
    rows = np.concatenate([wr, dr + U, tr, tc + U])
    cols = np.concatenate([wc, dc + U, tc + U, tr])
    vals = np.concatenate([wv, dv, tv, tv], axis=1)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], np.ascontiguousarray(vals[:, order])
    n = U + K
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    nptr, nidx, nval = _normalize_pattern(indptr, cols, vals, n)
    features = np.vstack([W, D]).astype(np.float64)
    return MultiEdgeGraph(U, K, indptr, cols.astype(np.int64), vals, nptr, nidx, nval, features)


def build_graph(corpus, word_emb, doc_emb, u=5, window=5, pair_mode="window", tfidf_variant="raw",
                eps=EPS, prune=PRUNE):
    pairs = cooccurrence_pairs(corpus, window, pair_mode)
    ww = word_word_edges(word_emb, pairs, eps, prune)
    dd = doc_doc_edges(doc_emb, doc_overlap_counts(corpus), u, eps, prune)
    return assemble(ww, dd, tfidf(corpus, tfidf_variant), word_emb, doc_emb)


# --------------------------------------------------------------------------
# snapshots and stats
# --------------------------------------------------------------------------

_FIELDS = ("indptr", "indices", "values", "norm_indptr", "norm_indices", "norm_values", "node_features")


def graph_bytes(graph):
    arrays = {f: getattr(graph, f) for f in _FIELDS}
    arrays.update(n_words=np.int64(graph.n_words), n_docs=np.int64(graph.n_docs))
    return npz_bytes(arrays)


def load_graph(path):
    with np.load(path) as z:
        return MultiEdgeGraph(int(z["n_words"]), int(z["n_docs"]), *(z[f] for f in _FIELDS))


def graph_stats(graph, quantiles=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """nnz, structural degree histogram and per-dimension weight quantiles
    for the word-word, doc-doc and word-doc blocks."""
    n, U = graph.n_nodes, graph.n_words
    rows = np.repeat(np.arange(n), np.diff(graph.indptr))
    cols = graph.indices
    degree = np.diff(graph.indptr)
    top = int(degree.max(initial=0))
    bin_edges = [0, 1]
    while bin_edges[-1] <= top:
        bin_edges.append(bin_edges[-1] * 2)
    hist, _ = np.histogram(degree, bins=bin_edges)
    blocks = {
        "word_word": (rows < U) & (cols < U),
        "doc_doc": (rows >= U) & (cols >= U),
        "word_doc": (rows < U) != (cols < U),
    }
    per_dim = []
    for t in range(graph.dims):
        entry = {"dim": t, "nnz": int(graph.values.shape[1])}
        for name, mask in blocks.items():
            v = graph.values[t, mask]
            entry[name] = [float(x) for x in np.quantile(v, quantiles)] if v.size else []
        per_dim.append(entry)
    return {
        "n_nodes": n,
        "n_words": U,
        "n_docs": graph.n_docs,
        "dims": graph.dims,
        "nnz": int(graph.values.shape[1]),
        "nnz_normalized": int(graph.norm_values.shape[1]),
        "block_nnz": {name: int(mask.sum()) for name, mask in blocks.items()},
        "isolated_nodes": int((degree == 0).sum()),
        "degree_histogram": {
            "bin_edges": [int(x) for x in bin_edges],
            "counts": [int(x) for x in hist],
        },
        "quantiles": list(quantiles),
        "per_dim": per_dim,
    }
