"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--threads 1]

Inputs are shaped like the synthetic3 preset (520 nodes, T = 25).
Both backends are run on identical inputs and their outputs compared.
"""

import argparse
import time

import numpy as np

from megcn import _accel, kernels
from megcn.config import from_dict
from megcn.embed import NoiseDistribution, negative_table
from megcn.pipeline import Run


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_spmm(graph, repeat):
    T, N = graph.dims, graph.n_nodes
    Y = np.random.default_rng(0).normal(size=(T, N, 25))
    args = (graph.norm_indptr, graph.norm_indices, graph.norm_values, Y)
    kernels._spmm_stack_numba(*args)  # compile
    t_nb, a = best_of(lambda: kernels._spmm_stack_numba(*args), repeat)
    t_np, b = best_of(lambda: kernels._spmm_stack_numpy(*args), repeat)
    return t_nb, t_np, float(np.abs(a - b).max())


def bench_cbow(corpus, repeat, dim=25, with_docs=True):
    tokens, offsets = corpus.flat_tokens()
    U, K = corpus.n_words, corpus.n_docs
    rng = np.random.default_rng(0)
    negs = negative_table(NoiseDistribution.from_counts(corpus.vocab.frequency), tokens, 5, rng)
    doc_rows = np.arange(U, U + K, dtype=np.int64) if with_docs else np.full(K, -1, dtype=np.int64)
    syn0 = (rng.random((U + K, dim)) - 0.5) / dim
    syn1 = np.zeros((U + K, dim))

    def run(fn):
        s0, s1 = syn0.copy(), syn1.copy()
        fn(s0, s1, tokens, offsets, doc_rows, negs, 5, False, 0.025, 2.5e-6, 0, tokens.size)
        return s0

    run(kernels._cbow_epoch_numba)  # compile
    t_nb, a = best_of(lambda: run(kernels._cbow_epoch_numba), repeat)
    t_np, b = best_of(lambda: run(kernels._cbow_epoch_numpy), max(1, repeat // 2))
    return t_nb, t_np, float(np.abs(a - b).max())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="runs/bench")
    args = ap.parse_args()
    _accel.set_threads(args.threads)

    cfg = from_dict({"run": {"preset": "synthetic3", "out": args.out}})
    run = Run(cfg)
    corpus, _ = run.corpus()
    graph = run.graph()
    print(f"{graph.n_nodes} nodes, T={graph.dims}, nnz per dimension {graph.norm_values.shape[1]}, "
          f"{corpus.flat_tokens()[0].size} tokens; numba threads {args.threads}")
    print(f"{'kernel':<24}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max |diff|':>12}")
    rows = [
        ("spmm_stack (d=25)", *bench_spmm(graph, args.repeat)),
        ("cbow_epoch word2vec", *bench_cbow(corpus, args.repeat, with_docs=False)),
        ("cbow_epoch doc2vec", *bench_cbow(corpus, args.repeat, with_docs=True)),
    ]
    for name, t_nb, t_np, diff in rows:
        print(f"{name:<24}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x{diff:>12.1e}")


if __name__ == "__main__":
    main()
