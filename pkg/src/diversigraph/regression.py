"""OLS models of outgoing on incoming slant and core-threshold sweeps."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la

from .graph import FollowerGraph, core_members, degrees
from .slantstats import SummaryTable, TweetStats, incoming_stats

SLANT = "in_mean"


def _log(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(x.astype(np.float64))


def _log_ratio(offset: float) -> Callable[[SummaryTable], np.ndarray]:
    def f(s: SummaryTable) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return _log(s.outdegree + offset) / _log(s.indegree + offset)
    return f


# name -> (label, transform); transforms see the whole SummaryTable
TRANSFORMS: dict[str, tuple[str, Callable[[SummaryTable], np.ndarray]]] = {
    "in_mean": ("Mean slant, sites in incoming tweets", lambda s: s.in_mean),
    "ln_in_count": ("ln(Count of incoming tweets)", lambda s: _log(s.in_count)),
    "ln_out_count": ("ln(Count of outgoing tweets)", lambda s: _log(s.out_count)),
    "in_quality": ("Mean quality of sites in incoming tweets", lambda s: s.in_quality_mean),
    "in_sd": ("Std deviation of slant of incoming tweets", lambda s: s.in_sd),
    "ln_followers2": ("ln(# followers+2)", lambda s: _log(s.outdegree + 2)),
    "follow_ratio2": ("ln(# followers+2) / ln(# followees+2)", _log_ratio(2)),
    "clustering": ("Clustering coefficient", lambda s: s.clustering_coefficient),
    "ln_followers": ("ln(# followers)", lambda s: _log(s.outdegree)),
    "follow_ratio": ("ln(# followers) / ln(# followees)", _log_ratio(0)),
}


@dataclass(frozen=True)
class ModelSpec:
    """Dependent variable plus covariates, each entered as a main effect and
    optionally interacted with incoming slant.

    Incoming slant enters raw; every other covariate is centred and scaled
    to unit variance before interactions are formed.
    """

    name: str
    covariates: tuple[str, ...] = ()
    interact: tuple[str, ...] = ()
    dependent: str = "out_mean"

    def columns(self) -> list[str]:
        cols = ["intercept", SLANT, *self.covariates]
        cols += [f"{SLANT}:{c}" for c in self.interact]
        return cols


_T4_II = ("ln_in_count", "ln_out_count", "in_quality", "in_sd")
_T4_III = _T4_II + ("ln_followers2", "follow_ratio2")
_T4_IV = _T4_III + ("clustering",)
_A1 = ("ln_out_count", "ln_followers", "follow_ratio")

MODELS: dict[str, ModelSpec] = {
    "I": ModelSpec("I"),
    "II": ModelSpec("II", _T4_II, _T4_II),
    "III": ModelSpec("III", _T4_III, _T4_III),
    "IV": ModelSpec("IV", _T4_IV, _T4_IV),
    "A1": ModelSpec("A1", _A1, _A1),
}


def column_label(col: str) -> str:
    if col == "intercept":
        return "Intercept"
    if ":" in col:
        _, c = col.split(":", 1)
        return f"Incoming slant x {TRANSFORMS[c][0]}"
    return TRANSFORMS[col][0]


@dataclass
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    columns: list[str]
    row_ids: np.ndarray
    centers: dict[str, float] = field(default_factory=dict)
    scales: dict[str, float] = field(default_factory=dict)


def design_matrix(summaries: SummaryTable, spec: ModelSpec) -> DesignMatrix:
    """Build (X, y) over accounts that both sent and received news tweets.

    Rows where any transformed covariate is undefined (e.g. log of zero)
    are dropped.  Column order is ``spec.columns()``.
    """
    keep = summaries.has_both.copy()
    raw = {c: np.asarray(TRANSFORMS[c][1](summaries), dtype=np.float64)
           for c in (SLANT, *spec.covariates, *spec.interact)}
    y = np.asarray(getattr(summaries, spec.dependent), dtype=np.float64)
    for v in (*raw.values(), y):
        keep &= np.isfinite(v)
    idx = np.flatnonzero(keep)
    x_slant = raw[SLANT][idx]
    cols = {"intercept": np.ones(idx.size), SLANT: x_slant}
    centers, scales = {}, {}
    for c in dict.fromkeys((*spec.covariates, *spec.interact)):
        v = raw[c][idx]
        sd = v.std(ddof=1) if v.size > 1 else 0.0
        if not sd > 0:
            raise ValueError(f"column {c!r} has zero variance")
        centers[c], scales[c] = float(v.mean()), float(sd)
        cols[c] = (v - v.mean()) / sd
    for c in spec.interact:
        cols[f"{SLANT}:{c}"] = x_slant * cols[c]
    names = spec.columns()
    X = np.column_stack([cols[c] for c in names]) if idx.size else np.zeros((0, len(names)))
    return DesignMatrix(X, y[idx], names, summaries.account_id[idx], centers, scales)


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, columns: Sequence[str]):
        super().__init__(f"design matrix is rank deficient; collinear columns: {list(columns)}")
        self.columns = list(columns)


@dataclass
class RegressionFit:
    coef: np.ndarray
    se: np.ndarray
    n: int
    p: int
    r2: float
    adj_r2: float
    sigma2: float
    columns: list[str]

    def __getitem__(self, col: str) -> tuple[float, float]:
        i = self.columns.index(col)
        return float(self.coef[i]), float(self.se[i])

    def rows(self) -> list[dict]:
        out = []
        for c, b, s in zip(self.columns, self.coef, self.se):
            known = c == "intercept" or c.split(":")[-1] in TRANSFORMS
            out.append({"term": c, "label": column_label(c) if known else c,
                        "estimate": float(b), "se": float(s)})
        return out


def ols_fit(X: np.ndarray, y: np.ndarray, columns: Sequence[str] | None = None,
            rank_tol: float = 1e-10) -> RegressionFit:
    """Least squares via pivoted QR with classical (homoskedastic) errors."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    columns = list(columns) if columns is not None else [f"x{i}" for i in range(p)]
    if n <= p:
        raise ValueError(f"need more observations than parameters (n={n}, p={p})")
    Q, R, piv = la.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rank_tol * d[0])) if d.size and d[0] > 0 else 0
    if rank < p:
        raise RankDeficientError([columns[j] for j in sorted(piv[rank:])])
    qty = Q.T @ y
    b_piv = la.solve_triangular(R, qty)
    Rinv = la.solve_triangular(R, np.eye(p))
    coef = np.empty(p)
    coef[piv] = b_piv
    resid = y - X @ coef
    rss = float(resid @ resid)
    sigma2 = rss / (n - p)
    var = np.empty(p)
    var[piv] = sigma2 * np.sum(Rinv * Rinv, axis=1)
    se = np.sqrt(var)
    tss = float(((y - y.mean()) ** 2).sum())
    if tss > 0:
        r2 = 1.0 - rss / tss
        adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p)
    else:
        r2 = adj = float("nan")
    return RegressionFit(coef, se, n, p, r2, adj, sigma2, columns)


def fit_model(summaries: SummaryTable, model: str | ModelSpec) -> RegressionFit:
    spec = MODELS[model] if isinstance(model, str) else model
    dm = design_matrix(summaries, spec)
    return ols_fit(dm.X, dm.y, dm.columns)


def write_fit_csv(fit: RegressionFit, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", "label", "estimate", "se"])
        for r in fit.rows():
            w.writerow([r["term"], r["label"], repr(r["estimate"]), repr(r["se"])])
        w.writerow(["n", "# of accounts", fit.n, ""])
        w.writerow(["adj_r2", "Adjusted R2", repr(fit.adj_r2), ""])


# ---------------------------------------------------------------- sweeps

MODES = ("within_core", "all_tweets", "within_periphery")
MIN_CELL = 10


@dataclass
class SweepCell:
    s: float
    t: float
    n_members: int
    n: int
    slope: float = float("nan")
    se: float = float("nan")
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    insufficient: bool = False

    @property
    def excludes_one(self) -> bool:
        return not self.insufficient and (self.ci_high < 1.0 or self.ci_low > 1.0)


def _simple_slope(x: np.ndarray, y: np.ndarray, cell: SweepCell) -> SweepCell:
    ok = np.isfinite(x) & np.isfinite(y)
    cell.n = int(ok.sum())
    if cell.n < MIN_CELL:
        cell.insufficient = True
        return cell
    try:
        fit = ols_fit(np.column_stack([np.ones(cell.n), x[ok]]), y[ok], ["intercept", SLANT])
    except RankDeficientError:
        cell.insufficient = True
        return cell
    cell.slope, cell.se = float(fit.coef[1]), float(fit.se[1])
    cell.ci_low, cell.ci_high = cell.slope - 1.96 * cell.se, cell.slope + 1.96 * cell.se
    return cell


def sweep_cell(g: FollowerGraph, stats: TweetStats, s: float, t: float, mode: str,
               global_in: np.ndarray | None = None) -> SweepCell:
    """Regress outgoing on incoming slant for one (s, t) core definition.

    ``within_core`` recomputes incoming slant from core followees only,
    ``all_tweets`` keeps every followee, ``within_periphery`` uses the
    complement of the core and drops tweets that originate in the core.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    outdeg, _ = degrees(g)
    core = core_members(outdeg, stats.count, s, t).members
    if mode == "within_periphery":
        nodes = np.setdiff1d(np.arange(g.n), core)
    else:
        nodes = core
    cell = SweepCell(s, t, int(nodes.size), 0)
    out_mean = stats.mean[nodes]
    if mode == "all_tweets":
        if global_in is None:
            global_in = incoming_stats(g.adj, stats).mean
        in_mean = global_in[nodes]
    else:
        sub = g.adj[nodes][:, nodes]
        in_mean = incoming_stats(sub, stats.subset(nodes)).mean
    return _simple_slope(in_mean, out_mean, cell)


@dataclass
class SweepResult:
    mode: str
    s_grid: list[float]
    t_grid: list[float]
    cells: dict[tuple[float, float], SweepCell]

    def cell(self, s: float, t: float) -> SweepCell:
        return self.cells[(s, t)]

    def to_grid_csv(self, path: str | Path, value: str = "slope") -> None:
        """Published layout: news-posting quantile rows (descending) by outdegree columns.

        ``value='slope'`` prints estimates with a leading ``*`` where the 95%
        interval excludes 1.0; ``value='n'`` prints member counts.
        """
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t\\s"] + [f"{s:g}" for s in self.s_grid])
            for t in sorted(self.t_grid, reverse=True):
                row = [f"{t:g}"]
                for s in self.s_grid:
                    c = self.cells[(s, t)]
                    if value == "n":
                        row.append(str(c.n_members))
                    elif c.insufficient:
                        row.append("NA")
                    else:
                        row.append(("*" if c.excludes_one else "") + f"{c.slope:.4f}")
                w.writerow(row)

    def to_long_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mode", "s", "t", "n_members", "n", "slope", "se", "ci_low",
                        "ci_high", "excludes_one", "insufficient"])
            for t in self.t_grid:
                for s in self.s_grid:
                    c = self.cells[(s, t)]
                    w.writerow([self.mode, f"{s:g}", f"{t:g}", c.n_members, c.n, repr(c.slope),
                                repr(c.se), repr(c.ci_low), repr(c.ci_high),
                                int(c.excludes_one), int(c.insufficient)])


def core_sweep(g: FollowerGraph, stats: TweetStats, s_grid: Sequence[float],
               t_grid: Sequence[float], mode: str = "within_core", threads: int = 1) -> SweepResult:
    for q in (*s_grid, *t_grid):
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quantile {q} outside [0, 1]")
    global_in = incoming_stats(g.adj, stats).mean if mode == "all_tweets" else None
    keys = [(float(s), float(t)) for t in t_grid for s in s_grid]

    def run(key):
        return sweep_cell(g, stats, key[0], key[1], mode, global_in)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            cells = list(ex.map(run, keys))
    else:
        cells = [run(k) for k in keys]
    return SweepResult(mode, [float(s) for s in s_grid], [float(t) for t in t_grid],
                       dict(zip(keys, cells)))
