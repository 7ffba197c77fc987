"""Per-account incoming/outgoing slant summaries and the site-slant logit."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import FollowerGraph, clustering_coefficients, degrees
from .ingest import NewsTweet


@dataclass
class TweetStats:
    """Per-node aggregates over a node's own news tweets (aligned with graph indices).

    ``slant_m2`` is the centred sum of squares, which keeps the standard
    deviation exact for near-constant slant multisets.
    """

    count: np.ndarray
    slant_sum: np.ndarray
    slant_m2: np.ndarray
    quality_sum: np.ndarray
    retweets: np.ndarray

    @classmethod
    def from_tweets(cls, g: FollowerGraph, tweets: Iterable[NewsTweet]) -> "TweetStats":
        tweets = list(tweets)
        n = g.n
        if not tweets:
            z = np.zeros(n)
            return cls(z.copy(), z.copy(), z.copy(), z.copy(), z.copy())
        idx = g.indices_of(t.author_id for t in tweets)
        s = np.fromiter((t.slant for t in tweets), dtype=np.float64, count=len(tweets))
        q = np.fromiter((t.quality for t in tweets), dtype=np.float64, count=len(tweets))
        rt = np.fromiter((t.retweet for t in tweets), dtype=np.float64, count=len(tweets))
        count = np.bincount(idx, minlength=n).astype(np.float64)
        total = np.bincount(idx, weights=s, minlength=n)
        mean = total / np.maximum(count, 1)
        m2 = np.bincount(idx, weights=(s - mean[idx]) ** 2, minlength=n)
        return cls(count, total, m2, np.bincount(idx, weights=q, minlength=n),
                   np.bincount(idx, weights=rt, minlength=n))

    def subset(self, nodes: np.ndarray) -> "TweetStats":
        return TweetStats(*(getattr(self, f.name)[nodes] for f in fields(self)))

    @property
    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 0, self.slant_sum / np.maximum(self.count, 1), np.nan)


def _sd(count: np.ndarray, m2: np.ndarray) -> np.ndarray:
    """Population standard deviation; 0 below two observations."""
    return np.where(count > 1, np.sqrt(np.maximum(m2, 0.0) / np.maximum(count, 1)), 0.0)


@dataclass
class IncomingStats:
    count: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    quality_mean: np.ndarray


def incoming_stats(adj: sp.csr_matrix, stats: TweetStats) -> IncomingStats:
    """Pool every followee's tweets for each node (adj[u, v] = 1: v follows u)."""
    coo = adj.tocoo()
    src, dst = coo.row, coo.col
    n = adj.shape[0]
    count = np.bincount(dst, weights=stats.count[src], minlength=n)
    total = np.bincount(dst, weights=stats.slant_sum[src], minlength=n)
    qsum = np.bincount(dst, weights=stats.quality_sum[src], minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
        qmean = np.where(count > 0, qsum / np.maximum(count, 1), np.nan)
    own_mean = stats.slant_sum / np.maximum(stats.count, 1)
    has = stats.count[src] > 0
    dev = np.where(has, own_mean[src] - np.where(has, mean[dst], 0.0), 0.0)
    m2 = np.bincount(dst, weights=stats.slant_m2[src] + stats.count[src] * dev * dev, minlength=n)
    return IncomingStats(count, mean, _sd(count, m2), qmean)


SUMMARY_FIELDS = (
    "account_id", "out_mean", "out_sd", "out_count", "out_quality_mean",
    "in_mean", "in_sd", "in_count", "in_quality_mean",
    "outdegree", "indegree", "clustering_coefficient", "retweet_count",
)


@dataclass
class AccountSummary:
    account_id: int
    out_mean: float
    out_sd: float
    out_count: int
    out_quality_mean: float
    in_mean: float
    in_sd: float
    in_count: int
    in_quality_mean: float
    outdegree: int
    indegree: int
    clustering_coefficient: float
    retweet_count: int


@dataclass
class SummaryTable:
    """Column-oriented AccountSummary records, one row per graph node.

    Means are NaN when the corresponding count is 0.
    """

    account_id: np.ndarray
    out_mean: np.ndarray
    out_sd: np.ndarray
    out_count: np.ndarray
    out_quality_mean: np.ndarray
    in_mean: np.ndarray
    in_sd: np.ndarray
    in_count: np.ndarray
    in_quality_mean: np.ndarray
    outdegree: np.ndarray
    indegree: np.ndarray
    clustering_coefficient: np.ndarray
    retweet_count: np.ndarray

    def __len__(self) -> int:
        return len(self.account_id)

    @property
    def has_both(self) -> np.ndarray:
        """Accounts that both sent and received news tweets (regression sample)."""
        return (self.out_count >= 1) & (self.in_count >= 1)

    def row(self, i: int) -> AccountSummary:
        vals = {}
        for f in SUMMARY_FIELDS:
            v = getattr(self, f)[i]
            vals[f] = v.item()
        return AccountSummary(**vals)

    def get(self, account_id: int) -> AccountSummary:
        i = int(np.searchsorted(self.account_id, account_id))
        if i >= len(self) or self.account_id[i] != account_id:
            raise KeyError(account_id)
        return self.row(i)

    def select(self, mask_or_idx) -> "SummaryTable":
        return SummaryTable(*(getattr(self, f)[mask_or_idx] for f in SUMMARY_FIELDS))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_FIELDS)
            for i in range(len(self)):
                w.writerow([_fmt(getattr(self, f)[i]) for f in SUMMARY_FIELDS])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SummaryTable":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        cols = {}
        for f in SUMMARY_FIELDS:
            raw = [r[f] for r in rows]
            if f in _INT_FIELDS:
                cols[f] = np.array([int(x) for x in raw], dtype=np.int64)
            else:
                cols[f] = np.array([float(x) if x else np.nan for x in raw], dtype=np.float64)
        return cls(**cols)


_INT_FIELDS = {"account_id", "out_count", "in_count", "outdegree", "indegree", "retweet_count"}


def _fmt(v) -> str:
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    v = float(v)
    return "" if np.isnan(v) else repr(v)


def summaries_from_stats(g: FollowerGraph, stats: TweetStats,
                         clustering: np.ndarray | None = None) -> SummaryTable:
    out_mean, out_sd = stats.mean, _sd(stats.count, stats.slant_m2)
    with np.errstate(invalid="ignore", divide="ignore"):
        out_q = np.where(stats.count > 0, stats.quality_sum / np.maximum(stats.count, 1), np.nan)
    inc = incoming_stats(g.adj, stats)
    outdeg, indeg = degrees(g)
    if clustering is None:
        clustering = clustering_coefficients(g)
    return SummaryTable(
        account_id=g.ids.copy(),
        out_mean=out_mean, out_sd=out_sd,
        out_count=stats.count.astype(np.int64), out_quality_mean=out_q,
        in_mean=inc.mean, in_sd=inc.sd,
        in_count=np.rint(inc.count).astype(np.int64), in_quality_mean=inc.quality_mean,
        outdegree=outdeg, indegree=indeg,
        clustering_coefficient=clustering,
        retweet_count=stats.retweets.astype(np.int64),
    )


def account_summaries(g: FollowerGraph, tweets: Iterable[NewsTweet]) -> tuple[FollowerGraph, SummaryTable]:
    """Summaries for every account; authors missing from ``g`` join as isolated nodes.

    Returns the (possibly extended) graph with the table, rows aligned to it.
    Repeated links count once per occurrence.
    """
    tweets = list(tweets)
    g = g.with_nodes({t.author_id for t in tweets})
    return g, summaries_from_stats(g, TweetStats.from_tweets(g, tweets))


# ---------------------------------------------------------------- crosstab

@dataclass
class CrossTab:
    edges: np.ndarray
    counts: np.ndarray  # [out_bin, in_bin], ascending bins
    outside: int

    def bin_label(self, k: int) -> str:
        return f"({self.edges[k]:g},{self.edges[k + 1]:g}]"

    def to_csv(self, path: str | Path) -> None:
        """Write in the published layout: outgoing bins descending down rows."""
        nb = len(self.edges) - 1
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["out_slant\\in_slant"] + [self.bin_label(k) for k in range(nb)])
            for r in range(nb - 1, -1, -1):
                w.writerow([self.bin_label(r)] + [int(c) for c in self.counts[r]])


def crosstab(in_mean: np.ndarray, out_mean: np.ndarray, bin_width: float = 0.5,
             lo: float = -1.75, hi: float = 2.25) -> CrossTab:
    """Count accounts in half-open (lo, hi] bins of mean incoming x outgoing slant.

    Accounts lacking either mean are skipped; finite values outside
    (lo, hi] are tallied in ``outside``.
    """
    in_mean = np.asarray(in_mean, dtype=np.float64)
    out_mean = np.asarray(out_mean, dtype=np.float64)
    nb = int(round((hi - lo) / bin_width))
    edges = lo + bin_width * np.arange(nb + 1)
    ok = np.isfinite(in_mean) & np.isfinite(out_mean)
    if not ok.any():
        raise ValueError("no account has both incoming and outgoing means")
    bi = np.ceil((in_mean[ok] - lo) / bin_width).astype(np.int64) - 1
    bo = np.ceil((out_mean[ok] - lo) / bin_width).astype(np.int64) - 1
    inside = (bi >= 0) & (bi < nb) & (bo >= 0) & (bo < nb)
    counts = np.zeros((nb, nb), dtype=np.int64)
    np.add.at(counts, (bo[inside], bi[inside]), 1)
    return CrossTab(edges, counts, int((~inside).sum()))


# ---------------------------------------------------------------- slant logit

@dataclass(frozen=True)
class VisitRecord:
    user_id: int
    site_id: int
    conservative: int


def read_visits(path: str | Path) -> list[VisitRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [VisitRecord(int(r["user_id"]), int(r["site_id"]), int(r["conservative"]))
                for r in csv.DictReader(fh)]


def visit_counts(visits: Iterable[VisitRecord], n_sites: int) -> np.ndarray:
    """(2, n_sites) visit counts; row 0 liberal, row 1 conservative."""
    counts = np.zeros((2, n_sites), dtype=np.float64)
    for v in visits:
        if not 0 <= v.site_id < n_sites:
            raise ValueError(f"site_id {v.site_id} out of range")
        if v.conservative not in (0, 1):
            raise ValueError(f"conservative flag must be 0 or 1, got {v.conservative}")
        counts[v.conservative, v.site_id] += 1
    return counts


_SIGNS = np.array([-1.0, 1.0])


def _unpack(theta: np.ndarray, n_sites: int) -> tuple[np.ndarray, np.ndarray]:
    alpha = np.concatenate([[0.0], theta[: n_sites - 1]])
    gamma = np.concatenate([[0.0], theta[n_sites - 1:]])
    return alpha, gamma


def logit_loglik(theta: np.ndarray, counts: np.ndarray, ridge: float = 0.0) -> float:
    """Penalised multinomial log-likelihood of site choices.

    Group g (sign -1 liberal, +1 conservative) picks site j with probability
    proportional to exp(alpha_j + sign_g * gamma_j); site 0 is the reference
    with alpha_0 = gamma_0 = 0.  ``theta`` = (alpha_1.., gamma_1..).
    """
    n_sites = counts.shape[1]
    alpha, gamma = _unpack(theta, n_sites)
    ll = 0.0
    for g in range(2):
        u = alpha + _SIGNS[g] * gamma
        umax = u.max()
        lse = umax + np.log(np.exp(u - umax).sum())
        ll += float(counts[g] @ u - counts[g].sum() * lse)
    return ll - 0.5 * ridge * float(theta @ theta)


def logit_grad(theta: np.ndarray, counts: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    n_sites = counts.shape[1]
    alpha, gamma = _unpack(theta, n_sites)
    ga = np.zeros(n_sites)
    gg = np.zeros(n_sites)
    for g in range(2):
        u = alpha + _SIGNS[g] * gamma
        p = np.exp(u - u.max())
        p /= p.sum()
        r = counts[g] - counts[g].sum() * p
        ga += r
        gg += _SIGNS[g] * r
    return np.concatenate([ga[1:], gg[1:]]) - ridge * theta


def logit_hessian(theta: np.ndarray, counts: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    n_sites = counts.shape[1]
    k = n_sites - 1
    alpha, gamma = _unpack(theta, n_sites)
    H = np.zeros((2 * k, 2 * k))
    for g in range(2):
        u = alpha + _SIGNS[g] * gamma
        p = np.exp(u - u.max())
        p /= p.sum()
        p = p[1:]
        W = counts[g].sum() * (np.diag(p) - np.outer(p, p))
        s = _SIGNS[g]
        H[:k, :k] -= W
        H[:k, k:] -= s * W
        H[k:, :k] -= s * W
        H[k:, k:] -= W
    return H - ridge * np.eye(2 * k)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, theta: np.ndarray):
        super().__init__(message)
        self.theta = theta


@dataclass
class LogitFit:
    alpha: np.ndarray
    gamma: np.ndarray
    alpha_se: np.ndarray
    gamma_se: np.ndarray
    loglik: float
    iterations: int
    grad_norm: float


def fit_slant_logit(visits: Sequence[VisitRecord] | np.ndarray, n_sites: int, ridge: float = 0.0,
                    tol: float = 1e-8, max_iter: int = 200) -> LogitFit:
    """Maximum-likelihood site quality (alpha) and slant (gamma) from visits.

    ``visits`` may be VisitRecords or a precomputed (2, n_sites) count array.
    Damped Newton steps; when the Hessian is not negative definite a ridge
    is added to the step system.  Converged when the gradient's max-norm
    drops below ``tol``; otherwise ConvergenceError carries the last iterate.
    Standard errors come from the inverse observed information.
    """
    if n_sites < 2:
        raise ValueError("need at least two sites")
    counts = np.asarray(visits, dtype=np.float64) if isinstance(visits, np.ndarray) \
        else visit_counts(visits, n_sites)
    if counts.shape != (2, n_sites):
        raise ValueError("count array must have shape (2, n_sites)")
    if ridge == 0.0 and (counts <= 0).any():
        raise ValueError("every site needs visits from both groups unless ridge > 0")
    k = n_sites - 1
    theta = np.zeros(2 * k)
    f = logit_loglik(theta, counts, ridge)
    g = logit_grad(theta, counts, ridge)
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < tol:
            break
        H = logit_hessian(theta, counts, ridge)
        shift = 0.0
        while True:
            try:
                L = np.linalg.cholesky(-H + shift * np.eye(2 * k))
                break
            except np.linalg.LinAlgError:
                shift = max(1e-8, 10 * shift)
        step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        t = 1.0
        while t > 1e-12:
            cand = theta + t * step
            fc = logit_loglik(cand, counts, ridge)
            if fc >= f - 1e-12 * abs(f):
                break
            t *= 0.5
        theta, f = cand, fc
        g = logit_grad(theta, counts, ridge)
    else:
        if np.max(np.abs(g)) >= tol:
            raise ConvergenceError(f"no convergence after {max_iter} iterations", theta)
    H = logit_hessian(theta, counts, ridge)
    cov = np.linalg.inv(-H)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    alpha, gamma = _unpack(theta, n_sites)
    return LogitFit(alpha, gamma, np.concatenate([[0.0], se[:k]]),
                    np.concatenate([[0.0], se[k:]]), f, it, float(np.max(np.abs(g))))
