"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--n 3000] [--repeat 3]

Both backends get identical inputs; the script also checks that their
outputs agree before reporting timings.
"""
from __future__ import annotations

import argparse
import math
import sys
import timeit

import numpy as np
import scipy.sparse as sp

from diversigraph import _kernels_py, kernels, permscore, synth


def csr(M):
    M = sp.csr_matrix(M)
    M.sort_indices()
    return M.indptr.astype(np.int64), M.indices.astype(np.int64)


def cases(n: int):
    pop = synth.gen_population(synth.SynthConfig(n_accounts=n, seed=1))
    g = pop.graph
    src, dst = g.edges()
    rank = permscore.random_permutation(g.n, 0).rank
    delta = permscore.edge_worst_reduction(src, dst, rank, g.n)
    ends = np.concatenate([src, dst])
    eid = np.concatenate([np.arange(src.size)] * 2).astype(np.int64)
    inc_edge = eid[np.argsort(ends, kind="stable")]
    inc_ptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(ends, minlength=g.n), out=inc_ptr[1:])
    k = math.ceil(0.05 * g.n)
    samples = np.stack([np.random.default_rng([0, r]).choice(g.n, k, replace=False)
                        for r in range(200)]).astype(np.int64)

    rng = np.random.default_rng(2)
    m = 60
    W = rng.uniform(0, 1, (m, m)) * (rng.random((m, m)) < 0.3)
    W = np.triu(W, 1) + np.triu(W, 1).T
    S = sp.csr_matrix(W)
    spins0 = rng.integers(0, 10, m).astype(np.int64)
    aargs = (S.indptr.astype(np.int64), S.indices.astype(np.int64), S.data.astype(np.float64), W.sum(1))

    def anneal(impl):
        spins = spins0.copy()
        impl.anneal(*aargs, spins, 10, 1.0, float(W.sum()), 20 * m, 1.0, 1e-4, 7)
        return spins

    return {
        "clustering_counts": lambda impl: impl.clustering_counts(*csr(g.sym), *csr(g.adj)),
        "perm_loglik": lambda impl: impl.perm_loglik(src, dst, rank, g.n),
        "batch_reductions (200 reps)":
            lambda impl: impl.batch_reductions(samples, inc_ptr, inc_edge, src, dst, delta, g.n),
        f"anneal ({m} outlets)": anneal,
    }, g


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=3000, help="accounts in the synthetic graph")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    fast = kernels.compiled()
    if fast is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    work, g = cases(args.n)
    print(f"graph: {g.n} accounts, {g.m} edges")
    print(f"{'kernel':<30}{'compiled (s)':>14}{'python (s)':>14}{'speedup':>10}")
    for name, fn in work.items():
        a, b = fn(fast), fn(_kernels_py)
        if not np.array_equal(np.asarray(a), np.asarray(b)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        tc = min(timeit.repeat(lambda: fn(fast), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        print(f"{name:<30}{tc:>14.4f}{tp:>14.4f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
