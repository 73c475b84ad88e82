"""Corpus-local word vectors (CBOW) and document vectors (PV-DM), both
trained with negative sampling."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from ._io import atomic_write
from .errors import DegenerateCorpus, Divergence, MissingRow, ShapeMismatch


@dataclass
class EmbeddingMatrix:
    values: np.ndarray
    keys: list
    trainable_params: int | None = None

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class NoiseDistribution:
    weights: np.ndarray
    cumulative: np.ndarray = field(repr=False)

    @classmethod
    def from_counts(cls, counts, exponent=0.75):
        w = np.asarray(counts, dtype=np.float64) ** exponent
        if w.size == 0 or w.sum() <= 0:
            raise ValueError("noise distribution needs positive counts")
        w = w / w.sum()
        cum = np.cumsum(w)
        cum[-1] = 1.0
        return cls(w, cum)

    @property
    def size(self):
        return self.weights.shape[0]

    def draw(self, shape, rng):
        return np.searchsorted(self.cumulative, rng.random(shape), side="right").astype(np.int64)


def sample_negatives(dist, k, exclude, rng):
    """``k`` i.i.d. draws from ``dist``, redrawing any that hit ``exclude``."""
    if dist.size < 2:
        raise ValueError("negative sampling needs at least two tokens")
    out = dist.draw(k, rng)
    bad = out == exclude
    while bad.any():
        out[bad] = dist.draw(int(bad.sum()), rng)
        bad = out == exclude
    return out


def negative_table(dist, centers, k, rng):
    """Vectorised :func:`sample_negatives` for every position of an epoch."""
    out = dist.draw((centers.shape[0], k), rng)
    bad = out == centers[:, None]
    while bad.any():
        out[bad] = dist.draw(int(bad.sum()), rng)
        bad = out == centers[:, None]
    return out


def ns_loss_grad(context, target_out, negative_out, mean=False):
    """Negative-sampling loss of one CBOW step and its exact gradients.

    ``context`` holds the input vectors summed (or averaged) into the hidden
    state; ``target_out``/``negative_out`` are output-side vectors. Returns
    ``(loss, d_context, d_target, d_negatives)``.
    """
    context = np.atleast_2d(context)
    negative_out = np.atleast_2d(negative_out)
    scale = 1.0 / context.shape[0] if mean else 1.0
    h = context.sum(axis=0) * scale
    pos = h @ target_out
    neg = negative_out @ h
    loss = np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum()
    sp = 1.0 / (1.0 + np.exp(-pos))
    sn = 1.0 / (1.0 + np.exp(-neg))
    d_h = -(1.0 - sp) * target_out + sn @ negative_out
    d_target = -(1.0 - sp) * h
    d_neg = sn[:, None] * h[None, :]
    d_context = np.broadcast_to(d_h * scale, context.shape).copy()
    return loss, d_context, d_target, d_neg


def _train(corpus, dim, window, epochs, negatives, lr_start, seed, with_docs, mean, exponent):
    n_words, n_docs = corpus.n_words, corpus.n_docs
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if n_words < 2:
        raise DegenerateCorpus(f"vocabulary has {n_words} word(s); negative sampling needs 2")
    tokens, offsets = corpus.flat_tokens()
    if not with_docs and np.all(np.diff(offsets) < 2):
        raise DegenerateCorpus("no document has two tokens, so no (center, context) pair exists")
    if tokens.size == 0:
        raise DegenerateCorpus("corpus has no tokens")

    rng = np.random.default_rng(seed)
    n_rows = n_words + (n_docs if with_docs else 0)
    syn0 = (rng.random((n_rows, dim)) - 0.5) / dim
    syn1 = np.zeros((n_rows, dim))
    doc_rows = (
        np.arange(n_words, n_words + n_docs, dtype=np.int64)
        if with_docs
        else np.full(n_docs, -1, dtype=np.int64)
    )
    dist = NoiseDistribution.from_counts(corpus.vocab.frequency, exponent)
    lr_end = lr_start / 1e4
    total = max(int(tokens.size) * epochs, 1)
    step = 0
    for _ in range(epochs):
        negs = negative_table(dist, tokens, negatives, rng)
        step = kernels.cbow_epoch(syn0, syn1, tokens, offsets, doc_rows, negs, int(window),
                                  bool(mean), float(lr_start), float(lr_end), step, total)
    if not (np.all(np.isfinite(syn0)) and np.all(np.isfinite(syn1))):
        raise Divergence("embedding training produced non-finite values; lower lr_start")
    return syn0, syn1


def train_word2vec(corpus, dim=25, window=5, epochs=200, negatives=5, lr_start=0.025, seed=0,
                   mean=False, exponent=0.75):
    """CBOW word vectors; returns the input-side U x dim projection."""
    syn0, syn1 = _train(corpus, dim, window, epochs, negatives, lr_start, seed,
                        with_docs=False, mean=mean, exponent=exponent)
    return EmbeddingMatrix(syn0, list(corpus.vocab.id_to_token), syn0.size + syn1.size)


def train_doc2vec(corpus, dim=25, window=5, epochs=200, negatives=5, lr_start=0.025, seed=0,
                  mean=False, exponent=0.75):
    """PV-DM document vectors.

    The projection has U + K rows (words then documents) during training and
    the output side is allocated over the same U + K keys; only the K
    document rows are returned.
    """
    syn0, syn1 = _train(corpus, dim, window, epochs, negatives, lr_start, seed,
                        with_docs=True, mean=mean, exponent=exponent)
    docs = np.ascontiguousarray(syn0[corpus.n_words:])
    keys = [f"doc:{i}" for i in range(corpus.n_docs)]
    return EmbeddingMatrix(docs, keys, syn0.size + syn1.size)


def export_embeddings(emb, path):
    """Write the ``#dim=T`` headed TSV; ``repr`` floats round-trip exactly."""
    lines = [f"#dim={emb.dim}"]
    for key, row in zip(emb.keys, emb.values):
        lines.append("\t".join([key] + [repr(float(v)) for v in row]))
    return atomic_write(path, "\n".join(lines) + "\n")


def load_embeddings(path, keys, expected_dim):
    """Read a TSV written by :func:`export_embeddings` (or any file in that
    format) and order its rows by ``keys``. Extra rows are ignored."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#dim="):
            raise ShapeMismatch(f"{path}: missing '#dim=T' header")
        dim = int(header[5:])
        if dim != expected_dim:
            raise ShapeMismatch(f"{path}: file has dim {dim}, expected {expected_dim}")
        rows = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            key, *vals = line.split("\t")
            if len(vals) != dim:
                raise ShapeMismatch(f"{path}:{lineno}: {len(vals)} values, expected {dim}")
            rows[key] = [float(v) for v in vals]
    out = np.empty((len(keys), dim))
    for i, key in enumerate(keys):
        if key not in rows:
            raise MissingRow(f"{path}: no vector for {key!r}")
        out[i] = rows[key]
    return EmbeddingMatrix(out, list(keys))
