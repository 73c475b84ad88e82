"""The numba and pure-numpy kernels must agree."""

import numpy as np
import pytest

from megcn import _accel, kernels
from megcn.sparse import SparseMatrix
from oracles import random_symmetric


def test_backend_flag_matches_binding():
    expected = kernels._spmm_stack_numba if _accel.USE_NUMBA else kernels._spmm_stack_numpy
    assert kernels.spmm_stack is expected
    assert _accel.backend_name() in ("numba", "numpy")


@pytest.mark.parametrize("shared", [False, True])
def test_spmm_backends_agree(shared):
    rng = np.random.default_rng(0)
    n, T, d = 30, 4, 5
    A = SparseMatrix.from_dense(random_symmetric(rng, n, density=0.2))
    A.data[:] = 1.0
    vals = rng.normal(size=(1 if shared else T, A.nnz))
    Y = rng.normal(size=(T, n, d))
    a = kernels._spmm_stack_numba(A.indptr, A.indices, vals, Y)
    b = kernels._spmm_stack_numpy(A.indptr, A.indices, vals, Y)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)
    dense = A.to_dense()
    for t in range(T):
        M = dense.copy()
        M[M != 0] = vals[0 if shared else t]
        np.testing.assert_allclose(a[t], M @ Y[t], atol=1e-12)


def test_spmm_empty_matrix():
    indptr = np.zeros(4, dtype=np.int64)
    idx = np.zeros(0, dtype=np.int64)
    Y = np.ones((2, 3, 2))
    for fn in (kernels._spmm_stack_numba, kernels._spmm_stack_numpy):
        assert not fn(indptr, idx, np.zeros((2, 0)), Y).any()


def test_cbow_backends_agree_on_sampled_negatives():
    rng = np.random.default_rng(5)
    U, dim = 20, 6
    lengths = [7, 1, 12, 4]
    tokens = rng.integers(0, U, sum(lengths)).astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    negs = rng.integers(0, U, (tokens.size, 5)).astype(np.int64)  # collisions allowed here
    for doc_rows in (np.full(4, -1), np.arange(U, U + 4)):
        syn0 = rng.normal(size=(U + 4, dim)) * 0.1
        syn1 = rng.normal(size=(U + 4, dim)) * 0.1
        out = []
        for fn in (kernels._cbow_epoch_numba, kernels._cbow_epoch_numpy):
            s0, s1 = syn0.copy(), syn1.copy()
            step = fn(s0, s1, tokens, offsets, doc_rows.astype(np.int64), negs, 3, False,
                      0.025, 0.0000025, 10, 1000)
            out.append((s0, s1, step))
        assert out[0][2] == out[1][2] == 10 + tokens.size
        np.testing.assert_allclose(out[0][0], out[1][0], rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(out[0][1], out[1][1], rtol=1e-12, atol=1e-15)


def test_disable_flag_selects_numpy(monkeypatch):
    import subprocess
    import sys
    code = "from megcn import kernels, _accel; print(_accel.backend_name(), kernels.spmm_stack.__name__)"
    env = dict(__import__("os").environ, MEGCN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "_spmm_stack_numpy"]
