"""Diagonal-gradient scoring of node orderings.

An ordering places each node at a rank 1..n.  The idealised tie-probability
matrix gives an edge between ranks i and j the value 1 when |i - j| = 1,
falling by 1/n per further step, and 0 on the diagonal.  An ordering's
score is the sum over present edges of the log of that value; orderings
that keep connected nodes close score higher.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .graph import FollowerGraph

PROVENANCES = ("outgoing_slant", "incoming_slant", "spectral", "cnm", "external", "random", "oracle")


def z_value(i: int, j: int, n: int) -> float:
    """Idealised tie probability between ranks i and j (1-based)."""
    if not (1 <= i <= n and 1 <= j <= n):
        raise ValueError(f"ranks ({i}, {j}) outside 1..{n}")
    d = abs(i - j)
    if d == 0:
        return 0.0
    return (n - d + 1) / n


def z_from_distance(d: np.ndarray, n: int) -> np.ndarray:
    # (n - d + 1) / n is a single rounding, unlike 1 - (d - 1) / n
    d = np.asarray(d)
    return np.where(d == 0, 0.0, (n - d + 1) / n)


def log_z_table(n: int) -> np.ndarray:
    """log z for distances 0..n-1 (entry 0, the diagonal, is -inf).

    Uses the C library log, as the compiled kernels do, so every backend
    produces identical per-edge terms.
    """
    return np.array([-math.inf] + [math.log((n - d + 1) / n) for d in range(1, n)])


@dataclass
class Permutation:
    """Node ordering: ``order[r]`` is the node placed at rank r+1."""

    order: np.ndarray
    provenance: str = "external"
    rank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        n = order.size
        if not np.array_equal(np.sort(order), np.arange(n)):
            raise ValueError("ordering is not a bijection onto 0..n-1")
        self.order = order
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(1, n + 1)
        self.rank = rank

    @classmethod
    def from_ranks(cls, rank: Sequence[int], provenance: str = "external") -> "Permutation":
        rank = np.asarray(rank, dtype=np.int64)
        if not np.array_equal(np.sort(rank), np.arange(1, rank.size + 1)):
            raise ValueError("ranks are not a bijection onto 1..n")
        return cls(np.argsort(rank, kind="stable"), provenance)

    @classmethod
    def identity(cls, n: int, provenance: str = "external") -> "Permutation":
        return cls(np.arange(n), provenance)

    @property
    def n(self) -> int:
        return int(self.order.size)

    def reversed(self) -> "Permutation":
        return Permutation(self.order[::-1].copy(), self.provenance)


def _edge_arrays(P) -> tuple[np.ndarray, np.ndarray, int]:
    if isinstance(P, FollowerGraph):
        src, dst = P.edges()
        return src, dst, P.n
    src, dst, n = P
    return np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64), int(n)


def perm_loglik(P, sigma: Permutation) -> float:
    """Log-likelihood of the idealised model summed over present edges.

    ``P`` is a FollowerGraph or a ``(src, dst, n)`` triple of node indices.
    """
    src, dst, n = _edge_arrays(P)
    if sigma.n != n:
        raise ValueError(f"permutation covers {sigma.n} nodes, graph has {n}")
    if np.any(src == dst):
        raise ValueError("self-loop present: log-likelihood is -inf")
    if src.size == 0:
        return 0.0
    return float(kernels.perm_loglik(src, dst, sigma.rank, n))


def edge_worst_reduction(src: np.ndarray, dst: np.ndarray, rank: np.ndarray, n: int) -> np.ndarray:
    """Per-edge drop in log-likelihood when the edge is pushed to the farthest
    rank from its row (source) endpoint.

    The farthest distance from rank i is max(i - 1, n - i).  This is an
    upper bound per edge, not the score of any single consistent ordering.
    """
    ri, rj = rank[src], rank[dst]
    logz = log_z_table(n)
    dmax = np.maximum(ri - 1, n - ri)
    return logz[np.abs(ri - rj)] - logz[dmax]


@dataclass
class CriticalValue:
    critical_value: float
    base_loglik: float
    reductions: np.ndarray = field(repr=False)
    frac: float = 0.05
    q: float = 0.95
    seed: int = 0


def _rep_sample(seed: int, rep: int, n: int, k: int) -> np.ndarray:
    rng = np.random.default_rng([seed, rep])
    return rng.choice(n, size=k, replace=False).astype(np.int64)


def critical_value(P, sigma: Permutation, frac: float = 0.05, reps: int = 1000,
                   q: float = 0.95, seed: int = 0, threads: int = 1) -> CriticalValue:
    """Bootstrap threshold below which another ordering counts as worse.

    Each replicate samples ceil(frac * n) nodes without replacement from an
    RNG keyed by (seed, replicate); every edge touching a sampled node (once,
    even if both ends are sampled) loses its worst-case reduction.  The
    critical value is the base score minus the q-quantile of the summed
    reductions.  Results do not depend on ``threads``.
    """
    src, dst, n = _edge_arrays(P)
    k = math.ceil(frac * n - 1e-12)
    if frac * n < 1:
        raise ValueError(f"frac * n = {frac * n:g} < 1: nothing to displace")
    base = perm_loglik((src, dst, n), sigma)
    if not math.isfinite(base):
        raise ValueError("base log-likelihood is not finite")
    delta = edge_worst_reduction(src, dst, sigma.rank, n)
    # incidence lists: every edge listed under both endpoints
    ends = np.concatenate([src, dst])
    eid = np.concatenate([np.arange(src.size), np.arange(src.size)]).astype(np.int64)
    order = np.argsort(ends, kind="stable")
    inc_edge = eid[order]
    inc_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(ends, minlength=n), out=inc_ptr[1:])

    def run(block: range) -> np.ndarray:
        samples = np.stack([_rep_sample(seed, r, n, k) for r in block]) if len(block) else \
            np.zeros((0, k), dtype=np.int64)
        return kernels.batch_reductions(samples, inc_ptr, inc_edge, src, dst, delta, n)

    chunk = 64
    blocks = [range(a, min(a + chunk, reps)) for a in range(0, reps, chunk)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    red = np.concatenate(parts) if parts else np.zeros(0)
    cv = base - float(np.quantile(red, q))
    return CriticalValue(cv, base, red, frac, q, seed)


def slant_permutation(values: np.ndarray, ids: np.ndarray, provenance: str = "external") -> Permutation:
    """Ascending sort by value (most liberal first); ties by account id."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("slant undefined for some nodes")
    return Permutation(np.lexsort((np.asarray(ids), values)), provenance)


def summary_permutation(summaries, key: str, g: FollowerGraph) -> Permutation:
    """Slant ordering of the nodes of ``g`` using a summary column.

    ``key`` is ``in_mean`` or ``out_mean``; the summary table must cover
    every node id of ``g``.
    """
    if key not in ("in_mean", "out_mean"):
        raise ValueError(f"unknown slant key {key!r}")
    if len(summaries) == 0:
        raise KeyError("summaries do not cover every subgraph node")
    pos = np.minimum(np.searchsorted(summaries.account_id, g.ids), len(summaries) - 1)
    if not np.array_equal(summaries.account_id[pos], g.ids):
        raise KeyError("summaries do not cover every subgraph node")
    prov = "incoming_slant" if key == "in_mean" else "outgoing_slant"
    return slant_permutation(getattr(summaries, key)[pos], g.ids, prov)


def random_permutation(n: int, seed: int) -> Permutation:
    return Permutation(np.random.default_rng([seed, n]).permutation(n), "random")


def permuted_matrix_figure(P, sigma: Permutation) -> np.ndarray:
    """(row rank, column rank) of every edge under the ordering."""
    src, dst, _ = _edge_arrays(P)
    return np.column_stack([sigma.rank[src], sigma.rank[dst]])


def is_worse(loglik_b: float, reference: CriticalValue) -> bool:
    """Ordering B describes the structure worse than the reference ordering."""
    return loglik_b < reference.critical_value


def write_report(path: str | Path, perm: str, loglik: float, cv: CriticalValue | None,
                 n: int, edges: int) -> None:
    report = {"perm": perm, "loglik": loglik,
              "critical_value": None if cv is None else cv.critical_value,
              "n": n, "edges": edges}
    if cv is not None:
        report.update({"frac": cv.frac, "q": cv.q, "reps": int(cv.reductions.size), "seed": cv.seed})
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
