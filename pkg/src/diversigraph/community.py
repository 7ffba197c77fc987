"""Structure-only node orderings: Laplacian eigenvectors and greedy modularity."""
from __future__ import annotations

import csv
import heapq
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .graph import FollowerGraph, giant_component, weak_components
from .permscore import CriticalValue, Permutation, critical_value, perm_loglik

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
EIGEN_TOL = 1e-8
DENSE_MAX = 64
# consecutive-eigenvalue ratio below which the low spectrum has no gap
GAP_RATIO = 1.5


class EigenSolverError(RuntimeError):
    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(f"{message}; residual norms {np.array2string(residuals, precision=3)}")
        self.residuals = residuals


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray      # ascending, including the zero eigenvalue
    vectors: np.ndarray          # columns for the smallest nonzero eigenvalues
    residuals: np.ndarray
    nodes: np.ndarray            # node indices of the analysed graph
    chosen: int = 0
    degenerate: bool = False

    @property
    def nonzero(self) -> np.ndarray:
        return self.eigenvalues[1:]

    @property
    def gap_ratio(self) -> float:
        lam = self.nonzero
        if lam.size < 2 or lam[0] <= 0:
            return 1.0
        return float(np.max(lam[1:] / lam[:-1]))


def laplacian(g: FollowerGraph) -> sp.csr_matrix:
    A = g.sym.astype(np.float64)
    d = np.asarray(A.sum(axis=1)).ravel()
    return (sp.diags(d) - A).tocsr()


def _fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def _solve(L: sp.csr_matrix, k: int) -> tuple[np.ndarray, np.ndarray]:
    n = L.shape[0]
    if n <= DENSE_MAX:
        w, V = eigh(L.toarray())
        return w[1:k + 1], V[:, 1:k + 1]
    deg = L.diagonal()
    c = 2.0 * float(deg.max()) if deg.max() > 0 else 1.0

    def mv(x):
        x = np.asarray(x).ravel()
        x = x - x.mean()
        y = c * x - L @ x
        return y - y.mean()

    op = LinearOperator((n, n), matvec=mv, dtype=np.float64)
    v0 = np.cos(np.arange(n) * 0.7071) + 0.01 * np.arange(n) / n
    v0 -= v0.mean()
    try:
        theta, V = eigsh(op, k=k, which="LA", v0=v0, tol=EIGEN_TOL, maxiter=10 * n)
    except ArpackNoConvergence as exc:
        vals = np.asarray(exc.eigenvalues)
        vecs = np.asarray(exc.eigenvectors)
        res = np.linalg.norm(L @ vecs - vecs * (c - vals), axis=0) if vals.size else np.array([np.inf])
        raise EigenSolverError("eigensolver did not converge", res) from None
    lam = c - theta
    o = np.argsort(lam, kind="stable")
    return lam[o], V[:, o]


def spectral_orderings(g: FollowerGraph, k: int = 5) -> tuple[list[Permutation], SpectralResult]:
    """Orderings from the eigenvectors of the k smallest nonzero Laplacian
    eigenvalues of the symmetrised graph.

    A disconnected graph is reduced to its giant component (with a warning);
    the returned permutations then index ``result.nodes``.
    """
    nodes = np.arange(g.n)
    if g.n and len(weak_components(g)) > 1:
        nodes = giant_component(g)
        warnings.warn(f"graph is disconnected; using giant component ({nodes.size} of {g.n} nodes)",
                      stacklevel=2)
        g = g.subgraph(nodes)
    n = g.n
    if n < 2:
        raise ValueError("spectral ordering needs at least two connected nodes")
    k = min(k, n - 1)
    L = laplacian(g)
    lam, V = _solve(L, k)
    V = np.column_stack([_fix_sign(V[:, j] / np.linalg.norm(V[:, j])) for j in range(V.shape[1])])
    res = np.linalg.norm(L @ V - V * lam, axis=0)
    if np.any(res > RESIDUAL_TOL):
        raise EigenSolverError("eigenpair residual above tolerance", res)
    lam = np.maximum(lam, 0.0)
    result = SpectralResult(np.concatenate([[0.0], lam]), V, res, nodes)
    scale = max(float(lam.max()), 1e-300)
    ties = lam.size > 1 and bool(np.any(np.diff(lam) <= 1e-8 * scale))
    result.degenerate = ties or result.gap_ratio < GAP_RATIO
    perms = [Permutation(np.lexsort((g.ids, V[:, j])), "spectral") for j in range(V.shape[1])]
    return perms, result


def best_spectral_permutation(orderings: list[Permutation], P) -> tuple[int, Permutation]:
    """Highest-likelihood candidate; the lowest eigen index wins ties."""
    if not orderings:
        raise ValueError("no candidate orderings")
    scores = [perm_loglik(P, s) for s in orderings]
    best = int(np.argmax(scores))
    return best, orderings[best]


@dataclass
class Dendrogram:
    """Agglomeration record.  Leaves are node indices 0..n-1; the cluster
    created by merge t has id n + t."""

    n: int
    merges: list[tuple[int, int, float]]
    order: np.ndarray
    roots: list[int] = field(default_factory=list)

    @property
    def modularity(self) -> np.ndarray:
        return np.array([q for _, _, q in self.merges])

    @property
    def best_step(self) -> int:
        """Number of merges giving the highest modularity (earliest on ties)."""
        if not self.merges:
            return 0
        return int(np.argmax(self.modularity)) + 1

    @property
    def degenerate(self) -> bool:
        """True when no split beats lumping each component together."""
        if not self.merges:
            return True
        return float(self.modularity.max()) <= 1e-12

    def partition(self, steps: int | None = None) -> np.ndarray:
        steps = self.best_step if steps is None else steps
        parent = np.arange(self.n + len(self.merges))
        for t, (a, b, _) in enumerate(self.merges[:steps]):
            parent[a] = parent[b] = self.n + t

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        roots = np.array([find(i) for i in range(self.n)])
        _, labels = np.unique(roots, return_inverse=True)
        # relabel by first appearance
        first = {}
        return np.array([first.setdefault(lab, len(first)) for lab in labels], dtype=np.int64)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "cluster_a", "cluster_b", "new_cluster", "modularity"])
            for t, (a, b, q) in enumerate(self.merges):
                w.writerow([t + 1, a, b, self.n + t, repr(float(q))])


def cnm_dendrogram(g: FollowerGraph) -> Dendrogram:
    """Greedy modularity agglomeration on the symmetrised, unweighted graph.

    Merges continue past the modularity peak until each connected component
    is one cluster, so the full tree is available.  Gains are kept as the
    exact integer 2m*c_ab - K_a*K_b (proportional to the modularity change);
    ties go to the pair whose smallest members are smallest.
    """
    n = g.n
    S = g.sym
    indptr, indices = S.indptr, S.indices
    K = np.diff(indptr).astype(np.int64).tolist()
    two_m = int(sum(K))
    links: list[dict[int, int]] = [dict.fromkeys(indices[indptr[i]:indptr[i + 1]].tolist(), 1)
                                   for i in range(n)]
    minmem = list(range(n))
    alive = [True] * n
    heap = []
    for a in range(n):
        for b in links[a]:
            if a < b:
                heap.append((-(two_m - K[a] * K[b]), a, b, a, b))
    heapq.heapify(heap)
    # 4 m^2 Q kept as an integer
    qint = -sum(k * k for k in K)
    denom = float(two_m) ** 2 if two_m else 1.0
    merges: list[tuple[int, int, float]] = []
    children: list[tuple[int, int]] = []
    while heap:
        negd, _, _, a, b = heapq.heappop(heap)
        if not (alive[a] and alive[b]):
            continue
        c = len(alive)
        alive[a] = alive[b] = False
        alive.append(True)
        qint += -2 * negd
        la, lb = links[a], links[b]
        if len(la) < len(lb):
            la, lb = lb, la
        for nb, cnt in lb.items():
            la[nb] = la.get(nb, 0) + cnt
        la.pop(a, None)
        la.pop(b, None)
        links[a] = links[b] = {}
        links.append(la)
        K.append(K[a] + K[b])
        minmem.append(min(minmem[a], minmem[b]))
        for nb, cnt in la.items():
            lnk = links[nb]
            lnk[c] = lnk.pop(a, 0) + lnk.pop(b, 0)
            d = two_m * cnt - K[c] * K[nb]
            lo, hi = sorted((minmem[c], minmem[nb]))
            heapq.heappush(heap, (-d, lo, hi, c, nb) if c < nb else (-d, lo, hi, nb, c))
        first, second = (a, b) if minmem[a] < minmem[b] else (b, a)
        children.append((first, second))
        merges.append((first, second, qint / denom if two_m else 0.0))

    roots = [i for i in range(len(alive)) if alive[i]]
    size = {}
    for r in roots:
        size[r] = _leaf_count(r, n, children)
    roots.sort(key=lambda r: (-size[r], minmem[r]))
    order = []
    for r in roots:
        order.extend(_leaves(r, n, children))
    return Dendrogram(n, merges, np.array(order, dtype=np.int64), roots)


def _leaves(root: int, n: int, children: list[tuple[int, int]]) -> list[int]:
    out, stack = [], [root]
    while stack:
        x = stack.pop()
        if x < n:
            out.append(x)
        else:
            a, b = children[x - n]
            stack.append(b)
            stack.append(a)
    return out


def _leaf_count(root: int, n: int, children) -> int:
    return len(_leaves(root, n, children))


def cnm_ordering(g: FollowerGraph) -> tuple[Permutation, Dendrogram]:
    """Leaf order of the greedy-modularity dendrogram.

    Within each merge the child holding the smaller node index comes first;
    components are laid out largest first.
    """
    d = cnm_dendrogram(g)
    return Permutation(d.order, "cnm"), d


@dataclass
class ComparisonRow:
    name: str
    loglik: float
    critical: CriticalValue
    worse_than: list[str]


def compare_orderings(P, perms: Mapping[str, Permutation], frac: float = 0.05, reps: int = 1000,
                      q: float = 0.95, seed: int = 0, threads: int = 1) -> list[ComparisonRow]:
    """Log-likelihood and critical value per ordering, best first.

    ``worse_than`` lists the orderings whose critical value this one misses.
    """
    if not perms:
        raise ValueError("no orderings to compare")
    sizes = {p.n for p in perms.values()}
    if len(sizes) != 1:
        raise ValueError("orderings cover different node sets")
    ll = {k: perm_loglik(P, p) for k, p in perms.items()}
    cv = {k: critical_value(P, p, frac, reps, q, seed, threads) for k, p in perms.items()}
    rows = [ComparisonRow(k, ll[k], cv[k], [o for o in perms if o != k and ll[k] < cv[o].critical_value])
            for k in perms]
    rows.sort(key=lambda r: -r.loglik)
    return rows


def write_comparison_csv(rows: list[ComparisonRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["permutation", "log_likelihood", "critical_value", "worse_than"])
        for r in rows:
            w.writerow([r.name, repr(r.loglik), repr(r.critical.critical_value), ";".join(r.worse_than)])
