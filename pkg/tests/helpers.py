"""Independent brute-force oracles shared by several test modules."""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from diversigraph.graph import FollowerGraph


def random_digraph(rng, n: int, p: float) -> FollowerGraph:
    A = rng.random((n, n)) < p
    np.fill_diagonal(A, False)
    src, dst = np.nonzero(A)
    return FollowerGraph(np.arange(n) * 3 + 1, src, dst)


def dense(g: FollowerGraph) -> np.ndarray:
    return g.adj.toarray().astype(bool)


def clustering_brute(A: np.ndarray) -> np.ndarray:
    """Triple enumeration: ordered neighbour pairs (j, k) joined by j -> k."""
    n = A.shape[0]
    out = np.zeros(n)
    for i in range(n):
        nei = [j for j in range(n) if j != i and (A[i, j] or A[j, i])]
        g = len(nei)
        if g < 2:
            continue
        links = 0
        for j in nei:
            for k in nei:
                if j != k and A[j, k]:
                    links += 1
        out[i] = links / (g * (g - 1))
    return out


def z_naive(i: int, j: int, n: int) -> float:
    """Unrolled recurrences in exact rationals: 0 on the diagonal, 1 next to
    it, minus 1/n per further step; rounded to float once at the end."""
    if i == j:
        return 0.0
    z = Fraction(1)
    for _ in range(abs(i - j) - 1):
        z -= Fraction(1, n)
    return float(z)


def loglik_naive(A: np.ndarray, rank: np.ndarray) -> float:
    """Full-matrix sum over cells with an edge, using math.log."""
    n = A.shape[0]
    total = 0.0
    for u in range(n):
        for v in range(n):
            if A[u, v]:
                total += math.log(z_naive(int(rank[u]), int(rank[v]), n))
    return total


def worst_reduction_naive(A: np.ndarray, rank: np.ndarray, sampled) -> float:
    """Each edge touching a sampled node, once: original minus the worst
    achievable value for the row endpoint, found by scanning every column rank."""
    n = A.shape[0]
    sampled = set(int(x) for x in sampled)
    total = 0.0
    for u in range(n):
        for v in range(n):
            if not A[u, v] or (u not in sampled and v not in sampled):
                continue
            i = int(rank[u])
            worst = min(z_naive(i, j, n) for j in range(1, n + 1) if j != i)
            total += math.log(z_naive(i, int(rank[v]), n)) - math.log(worst)
    return total


def modularity_naive(S: np.ndarray, labels) -> float:
    """Newman modularity of an undirected 0/1 adjacency matrix."""
    k = S.sum(axis=1)
    two_m = k.sum()
    q = 0.0
    n = S.shape[0]
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += S[i, j] - k[i] * k[j] / two_m
    return q / two_m


def agreement_up_to_relabel(a, b) -> float:
    """Best fraction of matching labels over all bijections (small label sets)."""
    from itertools import permutations

    a, b = np.asarray(a), np.asarray(b)
    la, lb = np.unique(a), np.unique(b)
    best = 0.0
    if len(la) > len(lb):
        a, b, la, lb = b, a, lb, la
    for perm in permutations(lb, len(la)):
        m = dict(zip(la, perm))
        best = max(best, float(np.mean([m[x] == y for x, y in zip(a, b)])))
    return best
