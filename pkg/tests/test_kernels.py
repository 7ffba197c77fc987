import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from diversigraph import _kernels_py, kernels, permscore
from helpers import random_digraph

compiled = kernels.compiled()
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def csr_arrays(M):
    M = sp.csr_matrix(M)
    M.sort_indices()
    return M.indptr.astype(np.int64), M.indices.astype(np.int64)


@needs_compiled
def test_clustering_counts_agree(rng):
    for _ in range(20):
        g = random_digraph(rng, int(rng.integers(1, 60)), 0.15)
        args = (*csr_arrays(g.sym), *csr_arrays(g.adj))
        np.testing.assert_array_equal(compiled.clustering_counts(*args), _kernels_py.clustering_counts(*args))


@needs_compiled
def test_perm_loglik_bit_identical(rng):
    for _ in range(20):
        n = int(rng.integers(2, 300))
        g = random_digraph(rng, n, min(1.0, 5 / n))
        src, dst = g.edges()
        rank = permscore.Permutation(rng.permutation(n)).rank
        assert compiled.perm_loglik(src, dst, rank, n) == _kernels_py.perm_loglik(src, dst, rank, n)


@needs_compiled
def test_batch_reductions_bit_identical(rng):
    g = random_digraph(rng, 150, 0.05)
    src, dst = g.edges()
    rank = permscore.random_permutation(150, 0).rank
    delta = permscore.edge_worst_reduction(src, dst, rank, 150)
    ends = np.concatenate([src, dst])
    eid = np.concatenate([np.arange(src.size)] * 2)
    order = np.argsort(ends, kind="stable")
    inc_ptr = np.zeros(151, dtype=np.int64)
    np.cumsum(np.bincount(ends, minlength=150), out=inc_ptr[1:])
    samples = np.stack([rng.choice(150, 20, replace=False) for _ in range(50)]).astype(np.int64)
    a = compiled.batch_reductions(samples, inc_ptr, eid[order].astype(np.int64), src, dst, delta, 150)
    b = _kernels_py.batch_reductions(samples, inc_ptr, eid[order].astype(np.int64), src, dst, delta, 150)
    np.testing.assert_array_equal(a, b)
    # edges with both ends sampled are counted once
    u, v = int(src[0]), int(dst[0])
    both = np.array([[u, v]], dtype=np.int64)
    hit = (src == u) | (src == v) | (dst == u) | (dst == v)
    assert b[0] >= 0
    assert _kernels_py.batch_reductions(both, inc_ptr, eid[order].astype(np.int64), src, dst, delta, 150)[0] \
        == pytest.approx(delta[hit].sum())


def test_env_var_forces_fallback():
    env = dict(os.environ, DIVERSIGRAPH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from diversigraph import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_default_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    if compiled is not None and not os.environ.get("DIVERSIGRAPH_PURE_PYTHON"):
        assert kernels.BACKEND == "cython"
