"""Outlet slant from audience co-following.

Outlets whose follower lists overlap are tied by an affinity weight; the
weighted graph is pruned, split into communities by a spin-glass annealer,
the communities are named with anchor outlets, and every outlet is scored by
how its co-following leans toward the conservative versus liberal cluster.
"""
from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels

log = logging.getLogger(__name__)

LABELS = ("liberal", "conservative", "mainstream", "pruned")
MIN_FOLLOWERS = 10_000
BOT_THRESHOLD = 0.4
_RNG_TAG = 0x5A17


@dataclass
class FollowerSets:
    """Sorted unique follower ids per outlet."""

    names: list[str]
    sets: list[np.ndarray]
    excluded: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.names) != len(self.sets):
            raise ValueError("names and sets differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate outlet names")
        self.sets = [np.unique(np.asarray(s, dtype=np.int64)) for s in self.sets]

    def __len__(self) -> int:
        return len(self.names)

    @property
    def counts(self) -> np.ndarray:
        return np.array([s.size for s in self.sets], dtype=np.int64)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown outlet {name!r}") from None

    @classmethod
    def from_directory(cls, path: str | Path, min_followers: int = MIN_FOLLOWERS,
                       bot_threshold: float | None = BOT_THRESHOLD) -> "FollowerSets":
        """One file per outlet (name = file stem), one follower id per line.

        An optional second column (comma or tab separated) holds a bot
        score; followers scoring at or above ``bot_threshold`` are dropped.
        Outlets left with fewer than ``min_followers`` are excluded.
        """
        names, sets, excluded = [], [], []
        files = sorted(p for p in Path(path).iterdir() if p.is_file() and not p.name.startswith("."))
        if not files:
            raise FileNotFoundError(f"no follower files in {path}")
        for p in files:
            ids = []
            with open(p, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    parts = re.split(r"[,\t ]+", line)
                    try:
                        uid = int(parts[0])
                        score = float(parts[1]) if len(parts) > 1 else None
                    except ValueError:
                        raise ValueError(f"{p.name}:{lineno}: malformed follower line {line!r}") from None
                    if score is not None and bot_threshold is not None and score >= bot_threshold:
                        continue
                    ids.append(uid)
            arr = np.unique(np.asarray(ids, dtype=np.int64))
            if arr.size < min_followers:
                excluded.append(p.stem)
                continue
            names.append(p.stem)
            sets.append(arr)
        if excluded:
            log.info("excluded %d outlets below %d followers", len(excluded), min_followers)
        return cls(names, sets, excluded)

    def to_directory(self, path: str | Path) -> None:
        out = Path(path)
        out.mkdir(parents=True, exist_ok=True)
        for name, s in zip(self.names, self.sets):
            (out / f"{name}.txt").write_text("".join(f"{int(x)}\n" for x in s), encoding="utf-8")


def affinity_entry(overlap: int, size_i: int, size_j: int) -> float:
    """Shared followers over the smaller audience."""
    m = min(size_i, size_j)
    if m <= 0:
        raise ValueError("audience sizes must be positive")
    if not 0 <= overlap <= m:
        raise ValueError("overlap exceeds the smaller audience")
    return overlap / m


def intersection_counts(sets: FollowerSets) -> np.ndarray:
    for name, s in zip(sets.names, sets.sets):
        if s.size == 0:
            raise ValueError(f"outlet {name!r} has no followers")
    k = len(sets)
    if k == 0:
        return np.zeros((0, 0), dtype=np.int64)
    allids = np.concatenate(sets.sets)
    cols = np.searchsorted(np.unique(allids), allids)
    rows = np.repeat(np.arange(k), sets.counts)
    M = sp.csr_matrix((np.ones(cols.size, dtype=np.int64), (rows, cols)))
    return (M @ M.T).toarray().astype(np.int64)


def affinity_matrix(sets: FollowerSets) -> np.ndarray:
    """Symmetric matrix of |F_i & F_j| / min(|F_i|, |F_j|) with zero diagonal."""
    inter = intersection_counts(sets)
    c = sets.counts
    A = inter / np.minimum.outer(c, c)
    np.fill_diagonal(A, 0.0)
    return A


def scale_affinity(A: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Penalise pairs of very different size by ln(min f) / ln(max f)."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 2):
        raise ValueError("follower counts must be at least 2")
    lf = np.log(counts)
    ratio = np.minimum.outer(lf, lf) / np.maximum.outer(lf, lf)
    return np.asarray(A, dtype=np.float64) * ratio


@dataclass
class PrunedGraph:
    weights: np.ndarray     # square over kept outlets
    kept: np.ndarray        # outlet indices
    pruned: np.ndarray      # outlet indices removed for low degree

    @property
    def n(self) -> int:
        return int(self.kept.size)


def prune(scaled: np.ndarray, w_min: float = 0.3, deg_min: int = 5, iterate: bool = False) -> PrunedGraph:
    """Drop edges lighter than ``w_min``, then outlets with fewer than
    ``deg_min`` remaining edges.

    The node step runs once unless ``iterate`` is set, in which case it
    repeats until every kept outlet meets the degree bound.
    """
    W = np.where(np.asarray(scaled) >= w_min, scaled, 0.0).astype(np.float64)
    np.fill_diagonal(W, 0.0)
    keep = np.ones(W.shape[0], dtype=bool)
    while True:
        deg = np.count_nonzero(W[np.ix_(keep, keep)], axis=1)
        drop = np.flatnonzero(keep)[deg < deg_min]
        if drop.size == 0:
            break
        keep[drop] = False
        if not iterate:
            break
    kept = np.flatnonzero(keep)
    return PrunedGraph(W[np.ix_(kept, kept)], kept, np.flatnonzero(~keep))


@dataclass
class Partition:
    labels: np.ndarray
    modularity: float
    seed: int

    @property
    def n_communities(self) -> int:
        return int(np.unique(self.labels).size)

    @property
    def trivial(self) -> bool:
        return self.n_communities <= 1


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel communities 0, 1, ... in order of first appearance."""
    first: dict[int, int] = {}
    return np.array([first.setdefault(int(x), len(first)) for x in labels], dtype=np.int64)


def weighted_modularity(W: np.ndarray, labels: np.ndarray, gamma: float = 1.0) -> float:
    k = W.sum(axis=1)
    two_w = k.sum()
    if two_w == 0:
        return 0.0
    same = labels[:, None] == labels[None, :]
    return float(((W - gamma * np.outer(k, k) / two_w) * same).sum() / two_w)


def _initial_temperature(indptr, indices, weights, k, spins, n_states, gamma, two_w, rng) -> float:
    # mean positive energy change of random single-spin moves from the start state
    n = k.size
    K = np.bincount(spins, weights=k, minlength=n_states)
    diffs = []
    for i in range(n):
        nw = np.bincount(spins[indices[indptr[i]:indptr[i + 1]]],
                         weights=weights[indptr[i]:indptr[i + 1]], minlength=n_states)
        kother = K - np.where(np.arange(n_states) == spins[i], k[i], 0.0)
        e = -(nw - gamma * k[i] * kother / two_w)
        s = int(rng.integers(n_states))
        diffs.append(e[s] - e[spins[i]])
    diffs = np.asarray(diffs)
    pos = diffs[diffs > 0]
    mean = float(pos.mean()) if pos.size else float(np.abs(weights).mean())
    return -mean / math.log(0.8)


def _anneal_once(W: np.ndarray, gamma: float, seed: int, n_states: int, sweeps_per_node: int) -> Partition:
    n = W.shape[0]
    S = sp.csr_matrix(W)
    S.sort_indices()
    indptr = S.indptr.astype(np.int64)
    indices = S.indices.astype(np.int64)
    weights = S.data.astype(np.float64)
    k = np.asarray(W.sum(axis=1)).ravel().astype(np.float64)
    two_w = float(k.sum())
    rng = np.random.default_rng([seed, _RNG_TAG])
    spins = rng.integers(n_states, size=n).astype(np.int64)
    kseed = int(rng.integers(0, 2**63 - 1))
    if two_w == 0:
        return Partition(canonical_labels(np.arange(n)), 0.0, seed)
    t0 = _initial_temperature(indptr, indices, weights, k, spins, n_states, gamma, two_w, rng)
    n_sweeps = max(sweeps_per_node * n, 2)
    kernels.anneal(indptr, indices, weights, k, spins, n_states, gamma, two_w,
                   n_sweeps, t0, t0 * 1e-4, kseed)
    labels = canonical_labels(spins)
    return Partition(labels, weighted_modularity(W, labels, gamma), seed)


def detect_clusters(pruned: PrunedGraph | np.ndarray, gamma: float = 1.0, seeds: Sequence[int] = (0,),
                    n_states: int = 25, sweeps_per_node: int = 50) -> Partition:
    """Spin-glass community detection by simulated annealing.

    Heat-bath single-spin updates under geometric cooling from a temperature
    where about 80% of uphill moves are accepted, followed by a
    zero-temperature quench.  With several seeds the highest-modularity run
    wins (earliest seed on ties).
    """
    W = pruned.weights if isinstance(pruned, PrunedGraph) else np.asarray(pruned, dtype=np.float64)
    if W.shape[0] == 0:
        raise ValueError("pruned graph is empty")
    if not seeds:
        raise ValueError("at least one seed required")
    best = None
    for s in seeds:
        p = _anneal_once(W, gamma, int(s), n_states, sweeps_per_node)
        if best is None or p.modularity > best.modularity:
            best = p
    if best.trivial:
        log.warning("spin-glass run found a single community")
    return best


def label_clusters(partition: Partition | np.ndarray, kept: np.ndarray, names: Sequence[str],
                   anchors: Mapping[str, Sequence[str]]) -> list[str]:
    """Name communities from anchor outlets.

    Each of the ``liberal`` and ``conservative`` anchor lists selects the
    community holding most of its (unpruned) anchors; a tie for that
    majority, or both lists selecting the same community, is an error.
    Remaining communities are ``mainstream``; pruned outlets are ``pruned``.
    """
    labels = partition.labels if isinstance(partition, Partition) else np.asarray(partition)
    kept = np.asarray(kept)
    pos = {int(o): i for i, o in enumerate(kept)}
    index = {nm: i for i, nm in enumerate(names)}
    chosen: dict[str, int] = {}
    for lab in ("liberal", "conservative"):
        lst = anchors.get(lab) or []
        if not lst:
            raise ValueError(f"no {lab} anchors given")
        votes: dict[int, int] = {}
        for nm in lst:
            if nm not in index:
                raise KeyError(f"anchor outlet {nm!r} not in the follower data")
            j = pos.get(index[nm])
            if j is None:
                log.warning("anchor %s was pruned", nm)
                continue
            c = int(labels[j])
            votes[c] = votes.get(c, 0) + 1
        if not votes:
            raise ValueError(f"all {lab} anchors were pruned")
        top = max(votes.values())
        winners = sorted(c for c, v in votes.items() if v == top)
        if len(winners) > 1:
            raise ValueError(f"{lab} anchors tie across communities {winners}")
        chosen[lab] = winners[0]
    if chosen["liberal"] == chosen["conservative"]:
        raise ValueError("liberal and conservative anchors select the same community")
    out = ["pruned"] * len(names)
    for j, o in enumerate(kept):
        c = int(labels[j])
        out[int(o)] = ("liberal" if c == chosen["liberal"]
                       else "conservative" if c == chosen["conservative"] else "mainstream")
    return out


def slant_scores(A_raw: np.ndarray, labels: Sequence[str]) -> np.ndarray:
    """(mean conservative affinity - mean liberal affinity) / mean affinity.

    Every mean skips the outlet itself.  NaN where the overall mean is 0 or
    a partisan cluster has no member other than the outlet.
    """
    A = np.asarray(A_raw, dtype=np.float64)
    n = A.shape[0]
    lab = np.asarray(labels)
    lib, cons = lab == "liberal", lab == "conservative"
    if not lib.any() or not cons.any():
        raise ValueError("both partisan clusters must be non-empty")
    off = ~np.eye(n, dtype=bool)
    with np.errstate(invalid="ignore", divide="ignore"):
        overall = (A * off).sum(axis=1) / (n - 1)
        m_lib = (A * (off & lib[None, :])).sum(axis=1) / (off & lib[None, :]).sum(axis=1)
        m_cons = (A * (off & cons[None, :])).sum(axis=1) / (off & cons[None, :]).sum(axis=1)
        score = (m_cons - m_lib) / overall
    score[~np.isfinite(score)] = np.nan
    bad = np.flatnonzero(np.isnan(score))
    if bad.size:
        log.warning("slant undefined for %d outlets", bad.size)
    return score


def write_slants(path: str | Path, names: Sequence[str], scores: np.ndarray, labels: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["outlet", "score", "cluster"])
        for nm, s, lab in zip(names, scores, labels):
            w.writerow([nm, "" if np.isnan(s) else repr(float(s)), lab])


def read_anchors(path: str | Path) -> dict[str, list[str]]:
    """anchors.csv with columns label,outlet."""
    out: dict[str, list[str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            lab = row["label"].strip()
            if lab not in ("liberal", "conservative"):
                raise ValueError(f"anchor label must be liberal or conservative, got {lab!r}")
            out.setdefault(lab, []).append(row["outlet"].strip())
    return out


@dataclass
class AffinityResult:
    names: list[str]
    counts: np.ndarray
    raw: np.ndarray
    scaled: np.ndarray
    pruned: PrunedGraph
    partition: Partition
    labels: list[str]
    scores: np.ndarray


def run_pipeline(sets: FollowerSets, anchors: Mapping[str, Sequence[str]], w_min: float = 0.3,
                 deg_min: int = 5, iterate: bool = False, gamma: float = 1.0,
                 seeds: Sequence[int] = (0,), n_states: int = 25, sweeps_per_node: int = 50) -> AffinityResult:
    raw = affinity_matrix(sets)
    scaled = scale_affinity(raw, sets.counts)
    pr = prune(scaled, w_min, deg_min, iterate)
    part = detect_clusters(pr, gamma, seeds, n_states, sweeps_per_node)
    labels = label_clusters(part, pr.kept, sets.names, anchors)
    return AffinityResult(list(sets.names), sets.counts, raw, scaled, pr, part, labels,
                          slant_scores(raw, labels))
