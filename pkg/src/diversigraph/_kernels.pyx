# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_kernels_py`` mirrors every function here."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log
from libc.stdint cimport int64_t, uint64_t, uint8_t
from libc.stdlib cimport qsort

cnp.import_array()

BACKEND = "cython"


def clustering_counts(const int64_t[:] sym_ptr, const int64_t[:] sym_idx,
                      const int64_t[:] out_ptr, const int64_t[:] out_idx):
    """Directed edge count among each node's (undirected) neighbourhood."""
    cdef Py_ssize_t n = sym_ptr.shape[0] - 1
    cdef cnp.ndarray[int64_t, ndim=1] counts = np.zeros(n, dtype=np.int64)
    cdef int64_t[:] cv = counts
    cdef int64_t[:] mark = np.full(n, -1, dtype=np.int64)
    cdef Py_ssize_t i, a, b, j
    cdef int64_t c
    with nogil:
        for i in range(n):
            for a in range(sym_ptr[i], sym_ptr[i + 1]):
                mark[sym_idx[a]] = i
            c = 0
            for a in range(sym_ptr[i], sym_ptr[i + 1]):
                j = sym_idx[a]
                for b in range(out_ptr[j], out_ptr[j + 1]):
                    if mark[out_idx[b]] == i:
                        c += 1
            cv[i] = c
    return counts


cdef int _cmp_i64(const void* a, const void* b) noexcept nogil:
    cdef int64_t x = (<const int64_t*>a)[0], y = (<const int64_t*>b)[0]
    return (x > y) - (x < y)


def perm_loglik(const int64_t[:] src, const int64_t[:] dst,
                const int64_t[:] rank, int64_t n):
    """Sum of log z over the edges, left to right in edge order."""
    cdef Py_ssize_t e, m = src.shape[0]
    cdef int64_t d
    cdef double total = 0.0
    with nogil:
        for e in range(m):
            d = rank[src[e]] - rank[dst[e]]
            if d < 0:
                d = -d
            total += log(<double>(n - d + 1) / <double>n)
    return total


def batch_reductions(const int64_t[:, :] samples, const int64_t[:] inc_ptr,
                     const int64_t[:] inc_edge, const int64_t[:] src,
                     const int64_t[:] dst, const double[:] delta, int64_t n):
    """Summed per-edge reduction for each row of sampled nodes.

    An edge with both endpoints sampled is counted once.  Hit edges are
    summed left to right in edge order so the result does not depend on
    the order of the sample.
    """
    cdef Py_ssize_t reps = samples.shape[0], k = samples.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(reps, dtype=np.float64)
    cdef double[:] ov = out
    cdef uint8_t[:] mark = np.zeros(n, dtype=np.uint8)
    cdef int64_t[:] buf = np.zeros(max(inc_edge.shape[0], 1), dtype=np.int64)
    cdef Py_ssize_t r, a, b, nhit
    cdef int64_t u, e, other
    cdef double acc
    with nogil:
        for r in range(reps):
            for a in range(k):
                mark[samples[r, a]] = 1
            nhit = 0
            for a in range(k):
                u = samples[r, a]
                for b in range(inc_ptr[u], inc_ptr[u + 1]):
                    e = inc_edge[b]
                    other = dst[e] if src[e] == u else src[e]
                    if mark[other] == 0 or u < other:
                        buf[nhit] = e
                        nhit += 1
            qsort(&buf[0], nhit, sizeof(int64_t), _cmp_i64)
            acc = 0.0
            for a in range(nhit):
                acc += delta[buf[a]]
            ov[r] = acc
            for a in range(k):
                mark[samples[r, a]] = 0
    return out


cdef inline uint64_t _splitmix(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t* state) noexcept nogil:
    return (_splitmix(state) >> 11) * (1.0 / 9007199254740992.0)


def anneal(const int64_t[:] indptr, const int64_t[:] indices,
           const double[:] weights, const double[:] strength,
           int64_t[:] spins, int64_t n_states, double gamma, double two_w,
           int64_t n_sweeps, double t0, double t_final, uint64_t seed,
           int64_t max_quench=100):
    """Heat-bath annealing of the weighted Potts Hamiltonian, in place.

    Ends with zero-temperature sweeps until no spin changes.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef double[:] ksum = np.zeros(n_states, dtype=np.float64)
    cdef double[:] nw = np.zeros(n_states, dtype=np.float64)
    cdef double[:] energy = np.zeros(n_states, dtype=np.float64)
    cdef uint64_t state = seed
    cdef Py_ssize_t i, a, s, sweep
    cdef int64_t cur, best
    cdef double ki, t, ratio, emin, z, u, acc, kother
    cdef int changed
    for i in range(n):
        ksum[spins[i]] += strength[i]
    ratio = 1.0
    if n_sweeps > 1:
        ratio = (t_final / t0) ** (1.0 / (n_sweeps - 1))
    with nogil:
        t = t0
        for sweep in range(n_sweeps + max_quench):
            changed = 0
            for i in range(n):
                cur = spins[i]
                ki = strength[i]
                for a in range(indptr[i], indptr[i + 1]):
                    nw[spins[indices[a]]] += weights[a]
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
                        energy[s] = exp(-(energy[s] - emin) / t)
                        z += energy[s]
                    u = _uniform(&state) * z
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
                for a in range(indptr[i], indptr[i + 1]):
                    nw[spins[indices[a]]] = 0.0
                if best != cur:
                    ksum[cur] -= ki
                    ksum[best] += ki
                    spins[i] = best
                    changed = 1
            if sweep < n_sweeps:
                t = t * ratio
            elif changed == 0:
                break
    return np.asarray(spins)
