"""A minimal CSR matrix carrying the graph adjacency matrices.

Construction leans on :mod:`scipy.sparse` for COO to CSR conversion; the
products used during training go through :func:`megcn.kernels.spmm_stack`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ShapeMismatch


@dataclass(frozen=True)
class SparseMatrix:
    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.data.shape[0])

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        """Build from triplets. Duplicates are summed, exact zeros dropped."""
        m = sp.coo_matrix(
            (np.asarray(vals), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=shape,
        ).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls.from_scipy(m)

    @classmethod
    def from_scipy(cls, m):
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(
            int(m.shape[0]),
            int(m.shape[1]),
            m.indptr.astype(np.int64),
            m.indices.astype(np.int64),
            m.data.copy(),
        )

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense)
        rows, cols = np.nonzero(dense)
        return cls.from_coo(rows, cols, dense[rows, cols], dense.shape)

    def to_scipy(self):
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self):
        out = np.zeros(self.shape, dtype=self.data.dtype)
        out[self.row_indices(), self.indices] = self.data
        return out

    def row_indices(self):
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.indptr))

    def transpose(self):
        return SparseMatrix.from_scipy(self.to_scipy().T)

    def is_symmetric(self):
        """Exact (bitwise) symmetry of structure and values."""
        if self.n_rows != self.n_cols:
            return False
        # stored zeros count as structure here, so transpose without pruning
        t = self.to_scipy().T.tocsr()
        t.sort_indices()
        return (
            np.array_equal(self.indptr, t.indptr)
            and np.array_equal(self.indices, t.indices)
            and np.array_equal(self.data, t.data)
        )

    def get(self, i, j):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        pos = lo + np.searchsorted(self.indices[lo:hi], j)
        if pos < hi and self.indices[pos] == j:
            return self.data[pos]
        return self.data.dtype.type(0)

    def matmat(self, dense):
        dense = np.asarray(dense, dtype=np.result_type(self.data.dtype, np.float64))
        if dense.ndim != 2 or dense.shape[0] != self.n_cols:
            raise ShapeMismatch(f"cannot multiply {self.shape} by {dense.shape}")
        vals = self.data.astype(dense.dtype, copy=False)[None, :]
        return kernels.spmm_stack(self.indptr, self.indices, vals, dense[None])[0]

    def check(self):
        """Raise AssertionError if a CSR invariant is broken."""
        assert self.indptr.shape == (self.n_rows + 1,)
        assert self.indptr[0] == 0 and self.indptr[-1] == self.nnz
        for i in range(self.n_rows):
            row = self.indices[self.indptr[i]:self.indptr[i + 1]]
            assert np.all(np.diff(row) > 0), f"row {i} columns not strictly increasing"
        if self.nnz:
            assert self.indices.min() >= 0 and self.indices.max() < self.n_cols
        assert np.all(np.isfinite(self.data))
        assert not np.any(self.data == 0), "explicit zero stored"
