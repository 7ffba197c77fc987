"""Fallback implementations of the compiled kernels.

Signatures and results match ``_kernels.pyx``.  Array-friendly kernels are
vectorised with numpy/scipy; ``anneal`` is a literal loop that reproduces the
compiled version bit for bit (same RNG, same arithmetic order).
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

BACKEND = "python"

_MASK64 = (1 << 64) - 1


def clustering_counts(sym_ptr, sym_idx, out_ptr, out_idx):
    n = len(sym_ptr) - 1
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    ones_s = np.ones(len(sym_idx), dtype=np.int64)
    ones_a = np.ones(len(out_idx), dtype=np.int64)
    S = sp.csr_matrix((ones_s, sym_idx, sym_ptr), shape=(n, n))
    A = sp.csr_matrix((ones_a, out_idx, out_ptr), shape=(n, n))
    # diag(S A S) with S symmetric
    counts = np.asarray((S @ A).multiply(S).sum(axis=1)).ravel()
    return counts.astype(np.int64)


def _seq_sum(x: np.ndarray) -> float:
    # left-to-right accumulation, as in the compiled loops (np.sum is pairwise)
    return float(np.cumsum(x)[-1]) if x.size else 0.0


def perm_loglik(src, dst, rank, n):
    d = np.abs(rank[src] - rank[dst])
    logz = np.array([0.0] + [math.log((n - k + 1) / n) for k in range(1, n)])
    return _seq_sum(logz[d])


def batch_reductions(samples, inc_ptr, inc_edge, src, dst, delta, n):
    samples = np.asarray(samples)
    delta = np.asarray(delta, dtype=np.float64)
    out = np.zeros(samples.shape[0], dtype=np.float64)
    mark = np.zeros(n, dtype=bool)
    for r in range(samples.shape[0]):
        mark[samples[r]] = True
        out[r] = _seq_sum(delta[mark[src] | mark[dst]])
        mark[samples[r]] = False
    return out


class _SplitMix:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next() >> 11) * (1.0 / 9007199254740992.0)


def anneal(indptr, indices, weights, strength, spins, n_states, gamma, two_w,
           n_sweeps, t0, t_final, seed, max_quench=100):
    n = len(indptr) - 1
    indptr = [int(x) for x in indptr]
    indices = [int(x) for x in indices]
    weights = [float(x) for x in weights]
    strength = [float(x) for x in strength]
    sp_list = [int(x) for x in spins]
    ksum = [0.0] * n_states
    nw = [0.0] * n_states
    energy = [0.0] * n_states
    rng = _SplitMix(seed)
    for i in range(n):
        ksum[sp_list[i]] += strength[i]
    ratio = 1.0
    if n_sweeps > 1:
        ratio = (t_final / t0) ** (1.0 / (n_sweeps - 1))
    t = t0
    for sweep in range(n_sweeps + max_quench):
        changed = False
        for i in range(n):
            cur = sp_list[i]
            ki = strength[i]
            lo, hi = indptr[i], indptr[i + 1]
            for a in range(lo, hi):
                nw[sp_list[indices[a]]] += weights[a]
            emin = 0.0
            for s in range(n_states):
                kother = ksum[s]
                if s == cur:
                    kother = kother - ki
                energy[s] = -(nw[s] - gamma * ki * kother / two_w)
                if s == 0 or energy[s] < emin:
                    emin = energy[s]
            if sweep < n_sweeps:
                z = 0.0
                for s in range(n_states):
                    energy[s] = math.exp(-(energy[s] - emin) / t)
                    z += energy[s]
                u = rng.uniform() * z
                acc = 0.0
                best = n_states - 1
                for s in range(n_states):
                    acc += energy[s]
                    if u < acc:
                        best = s
                        break
            else:
                best = cur
                for s in range(n_states):
                    if energy[s] < energy[best]:
                        best = s
            for a in range(lo, hi):
                nw[sp_list[indices[a]]] = 0.0
            if best != cur:
                ksum[cur] -= ki
                ksum[best] += ki
                sp_list[i] = best
                changed = True
        if sweep < n_sweeps:
            t = t * ratio
        elif not changed:
            break
    spins[:] = sp_list
    return np.asarray(spins)
