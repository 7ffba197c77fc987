"""Follower graph storage and structural statistics.

Orientation: an edge ``u -> v`` means *v follows u*, i.e. information flows
from u to v.  Out-neighbours of a node are its followers, in-neighbours its
followees, so outdegree counts followers and indegree counts followees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import kernels

GRAPH_CACHE_VERSION = 1


class FollowerGraph:
    """Immutable sparse directed graph with a dense 0..n-1 index.

    ``ids[i]`` is the external account id of node ``i``; ids are kept sorted so
    index order equals id order.  Edges are stored in CSR order (by source,
    then target), which fixes the iteration order everywhere downstream.
    """

    def __init__(self, ids: np.ndarray, src: np.ndarray, dst: np.ndarray):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and np.any(np.diff(ids) <= 0):
            raise ValueError("node ids must be strictly increasing")
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if np.any(src == dst):
            raise ValueError("self-loops are not allowed")
        n = len(ids)
        adj = sp.csr_matrix(
            (np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n)
        )
        adj.sum_duplicates()
        adj.data[:] = 1
        adj.sort_indices()
        self.ids = ids
        self.adj = adj
        self._index = {int(x): i for i, x in enumerate(ids)}
        self._adj_t: sp.csr_matrix | None = None
        self._sym: sp.csr_matrix | None = None

    @classmethod
    def from_id_edges(cls, followee_ids: Sequence[int], follower_ids: Sequence[int],
                      extra_ids: Iterable[int] = ()) -> "FollowerGraph":
        """Build from external ids; duplicates collapse, self-loops are rejected."""
        a = np.asarray(followee_ids, dtype=np.int64)
        b = np.asarray(follower_ids, dtype=np.int64)
        extra = np.fromiter(extra_ids, dtype=np.int64)
        ids = np.unique(np.concatenate([a, b, extra]))
        return cls(ids, np.searchsorted(ids, a), np.searchsorted(ids, b))

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def m(self) -> int:
        return int(self.adj.nnz)

    @property
    def adj_t(self) -> sp.csr_matrix:
        if self._adj_t is None:
            self._adj_t = self.adj.T.tocsr()
            self._adj_t.sort_indices()
        return self._adj_t

    @property
    def sym(self) -> sp.csr_matrix:
        """Unweighted symmetrised adjacency (edge if either direction)."""
        if self._sym is None:
            s = (self.adj + self.adj_t).tocsr()
            s.data[:] = 1
            s.sort_indices()
            self._sym = s
        return self._sym

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) index arrays in CSR order."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.adj.indptr))
        return src, self.adj.indices.astype(np.int64)

    def index_of(self, account_id: int) -> int:
        try:
            return self._index[int(account_id)]
        except KeyError:
            raise KeyError(f"unknown node id {account_id!r}") from None

    def indices_of(self, account_ids: Iterable[int]) -> np.ndarray:
        return np.array([self.index_of(a) for a in account_ids], dtype=np.int64)

    def followers(self, i: int) -> np.ndarray:
        return self.adj.indices[self.adj.indptr[i]:self.adj.indptr[i + 1]]

    def followees(self, i: int) -> np.ndarray:
        t = self.adj_t
        return t.indices[t.indptr[i]:t.indptr[i + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.followers(u)
        k = np.searchsorted(row, v)
        return bool(k < len(row) and row[k] == v)

    def subgraph(self, nodes: Sequence[int]) -> "FollowerGraph":
        """Induced subgraph on node *indices*; keeps every edge among them."""
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        sub = self.adj[nodes][:, nodes].tocoo()
        return FollowerGraph(self.ids[nodes], sub.row, sub.col)

    def with_nodes(self, account_ids: Iterable[int]) -> "FollowerGraph":
        """Copy with extra isolated nodes added (existing ids are ignored)."""
        extra = np.setdiff1d(np.fromiter(account_ids, dtype=np.int64), self.ids)
        if extra.size == 0:
            return self
        src, dst = self.edges()
        return FollowerGraph.from_id_edges(self.ids[src], self.ids[dst], extra)

    def save(self, path: str | Path) -> None:
        """Write the binary graph cache (numpy ``.npz``).

        Header fields: ``version``, ``n_nodes``, ``n_edges``; payload ``ids``
        (the id map, index -> account id) and ``src``/``dst`` edge indices.
        """
        src, dst = self.edges()
        with open(path, "wb") as fh:
            np.savez(fh, version=np.int64(GRAPH_CACHE_VERSION),
                     n_nodes=np.int64(self.n), n_edges=np.int64(self.m),
                     ids=self.ids, src=src, dst=dst)

    @classmethod
    def load(cls, path: str | Path) -> "FollowerGraph":
        with np.load(path) as z:
            if int(z["version"]) != GRAPH_CACHE_VERSION:
                raise ValueError(f"unsupported graph cache version {int(z['version'])}")
            g = cls(z["ids"], z["src"], z["dst"])
            if g.n != int(z["n_nodes"]) or g.m != int(z["n_edges"]):
                raise ValueError(f"graph cache header mismatch in {path}")
        return g

    def __repr__(self) -> str:
        return f"FollowerGraph(n={self.n}, m={self.m})"


def degrees(g: FollowerGraph) -> tuple[np.ndarray, np.ndarray]:
    """Return (outdegree, indegree) = (followers, followees) per node."""
    outdeg = np.diff(g.adj.indptr).astype(np.int64)
    indeg = np.diff(g.adj_t.indptr).astype(np.int64)
    return outdeg, indeg


def clustering_coefficients(g: FollowerGraph) -> np.ndarray:
    """Directed clustering coefficient of every node.

    Counts ordered neighbour pairs (j, k) with an edge j -> k, where the
    neighbourhood joins followers and followees, and divides by g(g-1).
    Nodes with fewer than two neighbours get 0.
    """
    sym = g.sym
    counts = kernels.clustering_counts(
        sym.indptr.astype(np.int64), sym.indices.astype(np.int64),
        g.adj.indptr.astype(np.int64), g.adj.indices.astype(np.int64),
    )
    k = np.diff(sym.indptr).astype(np.float64)
    out = np.zeros(g.n, dtype=np.float64)
    ok = k >= 2
    out[ok] = counts[ok] / (k[ok] * (k[ok] - 1))
    return out


def clustering_coefficient(g: FollowerGraph, account_id: int) -> float:
    i = g.index_of(account_id)
    nei = g.sym.indices[g.sym.indptr[i]:g.sym.indptr[i + 1]]
    k = len(nei)
    if k < 2:
        return 0.0
    inside = np.zeros(g.n, dtype=bool)
    inside[nei] = True
    links = sum(int(inside[g.followers(j)].sum()) for j in nei)
    return links / (k * (k - 1))


def weak_components(g: FollowerGraph) -> list[np.ndarray]:
    """Weakly connected components, largest first (ties: smallest member first)."""
    if g.n == 0:
        return []
    _, labels = connected_components(g.adj, directed=True, connection="weak")
    order = np.argsort(labels, kind="stable")
    cuts = np.flatnonzero(np.diff(labels[order])) + 1
    comps = np.split(order, cuts)
    comps.sort(key=lambda c: (-len(c), int(c[0])))
    return comps


def giant_component(g: FollowerGraph) -> np.ndarray:
    """Node indices of the largest weakly connected component."""
    comps = weak_components(g)
    return comps[0] if comps else np.zeros(0, dtype=np.int64)


def quantile_type1(values: np.ndarray, q: float) -> float:
    """Inverse-CDF quantile: the smallest data value x with F(x) >= q."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile {q} outside [0, 1]")
    x = np.sort(np.asarray(values))
    if x.size == 0:
        raise ValueError("quantile of empty data")
    # guard q*n against float noise such as 0.1*30 = 3.0000000000000004
    k = max(math.ceil(q * x.size - 1e-9), 1)
    return x[k - 1].item()


@dataclass
class CoreSpec:
    s: float
    t: float
    outdegree_threshold: float
    newscount_threshold: float
    members: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.members.size)

    @property
    def empty(self) -> bool:
        return self.members.size == 0


def core_members(outdeg: np.ndarray, newscounts: np.ndarray, s: float, t: float) -> CoreSpec:
    od = quantile_type1(outdeg, s)
    nc = quantile_type1(newscounts, t)
    members = np.flatnonzero((outdeg >= od) & (newscounts >= nc)).astype(np.int64)
    return CoreSpec(s, t, od, nc, members)


def induce_core(g: FollowerGraph, newscounts: np.ndarray, s: float,
                t: float) -> tuple[CoreSpec, FollowerGraph]:
    """Nodes at or above the s-quantile of outdegree and t-quantile of news posts.

    Quantiles are taken over the full node set.  An empty core yields an
    empty subgraph rather than an error.
    """
    newscounts = np.asarray(newscounts)
    if newscounts.shape != (g.n,):
        raise ValueError("newscounts must have one entry per node")
    outdeg, _ = degrees(g)
    spec = core_members(outdeg, newscounts, s, t)
    return spec, g.subgraph(spec.members)


def moderate_members(g: FollowerGraph, newscounts: np.ndarray) -> np.ndarray:
    """Indices of the moderate-users subgraph within ``g``.

    Qualifying nodes have Q25 <= outdegree < Q75 and news posts < Q75; the
    result is the giant weak component of their induced subgraph.
    """
    outdeg, _ = degrees(g)
    newscounts = np.asarray(newscounts)
    lo = quantile_type1(outdeg, 0.25)
    hi = quantile_type1(outdeg, 0.75)
    nq = quantile_type1(newscounts, 0.75)
    qual = np.flatnonzero((outdeg >= lo) & (outdeg < hi) & (newscounts < nq))
    if qual.size == 0:
        return qual.astype(np.int64)
    sub = g.subgraph(qual)
    return qual[giant_component(sub)].astype(np.int64)


def moderate_subgraph(g: FollowerGraph, newscounts: np.ndarray) -> FollowerGraph:
    return g.subgraph(moderate_members(g, newscounts))


@dataclass
class ShareReport:
    """2x2 shares indexed [source block, target block]; block 0 = core, 1 = periphery."""

    edge_counts: np.ndarray
    edge_shares: np.ndarray
    tweet_volume: np.ndarray
    tweet_shares: np.ndarray

    def rows(self) -> list[dict]:
        names = ("core", "periphery")
        out = []
        for a in range(2):
            for b in range(2):
                out.append({
                    "from": names[a], "to": names[b],
                    "edges": int(self.edge_counts[a, b]),
                    "edge_share": float(self.edge_shares[a, b]),
                    "tweets_received_bound": float(self.tweet_volume[a, b]),
                    "tweet_share": float(self.tweet_shares[a, b]),
                })
        return out


def connectivity_shares(g: FollowerGraph, core: np.ndarray,
                        tweets_sent: np.ndarray) -> ShareReport:
    """Edge and tweets-received shares between core and periphery.

    ``tweets_sent[i]`` is the number of news tweets node i posted.  The tweet
    volume credited to block pair (A, B) is the sum over accounts u in A of
    tweets_sent(u) times the number of news-active followers of u in B.
    """
    tweets_sent = np.asarray(tweets_sent, dtype=np.float64)
    block = np.ones(g.n, dtype=np.int64)
    block[np.asarray(core, dtype=np.int64)] = 0
    src, dst = g.edges()
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, (block[src], block[dst]), 1)
    active = tweets_sent[dst] >= 1
    volume = np.zeros((2, 2), dtype=np.float64)
    np.add.at(volume, (block[src[active]], block[dst[active]]), tweets_sent[src[active]])
    total_e = counts.sum()
    total_v = volume.sum()
    edge_shares = counts / total_e if total_e else np.zeros((2, 2))
    tweet_shares = volume / total_v if total_v else np.zeros((2, 2))
    return ShareReport(counts, edge_shares, volume, tweet_shares)
