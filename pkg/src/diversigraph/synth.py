"""Seeded generators with planted ground truth.

Every random draw comes from a generator keyed by ``(seed, stream tag,
entity)``, so results do not depend on generation order or threading.

Follower population
-------------------
Accounts split into a small core and a large periphery; each block has a
root tier and a follower tier.  Core roots tweet around their latent
slant.  A core follower-tier account's tweets are ``core_slope * m + noise``
where ``m`` is the pooled mean slant of the tweets posted by its core
followees, all of which are core roots.  Periphery roots follow only core
accounts and tweet around ``periphery_slope`` times their feed mean;
periphery follower-tier accounts tweet around ``periphery_slope`` times the
mean of their periphery followees (periphery roots), ignoring core tweets.

Regressing outgoing on within-block incoming slant recovers the planted
slope for each block.  When a loose core threshold admits periphery roots,
their points carry the periphery slope, so the pooled within-core slope
rises toward the core slope as the threshold tightens.  Core accounts may
also follow periphery accounts; those ties never feed tweet generation.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .affinity import FollowerSets
from .graph import FollowerGraph
from .ingest import NewsTweet, ResolverCache, SlantEntry, SlantTable, TweetRecord, write_edges, write_events

# stream tags
_LATENT, _FOLLOW, _EVENTS, _BLOCKS, _AUDIENCE, _TABLE, _VISITS, _LABELS = range(1, 9)

T_START = 1_250_000_000.0   # mid-2009


def _rng(seed: int, tag: int, *entity: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), tag, *(int(e) for e in entity)])


@dataclass
class SynthConfig:
    n_accounts: int = 2000
    seed: int = 0
    core_frac: float = 0.05
    root_frac: float = 0.5
    homophily: float = 1.0
    core_boost: float = 10.0
    core_slope: float = 1.2
    periphery_slope: float = 0.7
    core_rate: float = 50.0
    periphery_rate: float = 2.0
    periphery_dispersion: float = 1.0   # gamma shape of periphery rates; 0 = plain Poisson
    follows_core: int = 20          # within-core follows of a core follower-tier account
    follows_cross: int = 10         # core accounts following periphery accounts
    follows_periphery: int = 10     # follows made by a periphery account
    mix_means: tuple[float, ...] = (-0.8, 0.8)
    mix_sds: tuple[float, ...] = (0.5, 0.5)
    mix_weights: tuple[float, ...] = (0.5, 0.5)
    tweet_noise: float = 0.3
    slant_step: float = 0.05
    slant_range: float = 4.0
    short_link_frac: float = 0.25
    retweet_frac: float = 0.1
    noise_url_frac: float = 0.05

    def __post_init__(self):
        for name in ("core_frac", "root_frac", "short_link_frac", "retweet_frac", "noise_url_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.homophily < 0 or self.core_boost <= 0:
            raise ValueError("homophily must be >= 0 and core_boost > 0")
        if self.core_rate < 0 or self.periphery_rate < 0:
            raise ValueError("tweet rates must be non-negative")
        if not (len(self.mix_means) == len(self.mix_sds) == len(self.mix_weights)):
            raise ValueError("mixture parameter lengths differ")
        w = np.asarray(self.mix_weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("mixture weights must be non-negative with positive sum")
        if self.n_accounts < 2:
            raise ValueError("need at least two accounts")


@dataclass
class Population:
    graph: FollowerGraph
    latent: np.ndarray         # per node index
    core: np.ndarray           # bool per node index
    root: np.ndarray           # bool per node index
    config: SynthConfig

    @property
    def ids(self) -> np.ndarray:
        return self.graph.ids


def _latent(cfg: SynthConfig, i: int) -> float:
    r = _rng(cfg.seed, _LATENT, i)
    w = np.asarray(cfg.mix_weights, dtype=float)
    c = int(r.choice(len(w), p=w / w.sum()))
    return float(r.normal(cfg.mix_means[c], cfg.mix_sds[c]))


def _pick(r: np.random.Generator, cand: np.ndarray, weight: np.ndarray, k: int) -> np.ndarray:
    """k distinct candidates, weighted, via Gumbel top-k."""
    k = min(k, cand.size)
    if k <= 0:
        return cand[:0]
    key = np.log(weight) + r.gumbel(size=cand.size)
    top = np.argpartition(-key, k - 1)[:k] if k < cand.size else np.arange(cand.size)
    return np.sort(cand[top])


def gen_population(cfg: SynthConfig) -> Population:
    """Accounts with latent slants and a follow graph.

    Follow weight toward target u is exp(-h |s_v - s_u|), times the core
    boost when u is in the core.
    """
    n = cfg.n_accounts
    n_core = int(round(cfg.core_frac * n))
    core = np.zeros(n, dtype=bool)
    core[:n_core] = True
    root = np.zeros(n, dtype=bool)
    n_core_root = max(int(round(cfg.root_frac * n_core)), 1 if n_core else 0)
    n_per_root = max(int(round(cfg.root_frac * (n - n_core))), 1)
    root[:n_core_root] = True
    root[n_core:n_core + n_per_root] = True
    latent = np.array([_latent(cfg, i) for i in range(n)])
    h = cfg.homophily
    all_core = np.flatnonzero(core)
    core_roots = np.flatnonzero(core & root)
    periphery = np.flatnonzero(~core)
    per_roots = np.flatnonzero(~core & root)
    followee, follower = [], []   # edge u -> v: v follows u
    for v in range(n):
        r = _rng(cfg.seed, _FOLLOW, v)
        picks = []
        if core[v]:
            if not root[v]:
                w = np.exp(-h * np.abs(latent[core_roots] - latent[v]))
                picks.append(_pick(r, core_roots, w, cfg.follows_core))
            w = np.exp(-h * np.abs(latent[periphery] - latent[v]))
            picks.append(_pick(r, periphery, w, cfg.follows_cross))
        else:
            cand = all_core if root[v] else np.concatenate([all_core, per_roots])
            cand = cand[cand != v]
            w = np.exp(-h * np.abs(latent[cand] - latent[v])) * np.where(core[cand], cfg.core_boost, 1.0)
            picks.append(_pick(r, cand, w, cfg.follows_periphery))
        for u in np.concatenate(picks) if picks else ():
            followee.append(int(u))
            follower.append(v)
    g = FollowerGraph(np.arange(1, n + 1, dtype=np.int64), np.asarray(followee, dtype=np.int64),
                      np.asarray(follower, dtype=np.int64))
    return Population(g, latent, core, root, cfg)


def slant_table(cfg: SynthConfig) -> SlantTable:
    """Synthetic outlets on an even slant grid, one domain per grid point."""
    k = int(round(2 * cfg.slant_range / cfg.slant_step)) + 1
    r = _rng(cfg.seed, _TABLE)
    quality = r.uniform(-1.0, 1.0, size=k)
    entries = [SlantEntry(f"outlet{i:03d}.example", round(-cfg.slant_range + i * cfg.slant_step, 10),
                          round(float(quality[i]), 6), f"Outlet {i:03d}") for i in range(k)]
    return SlantTable(entries)


@dataclass
class Events:
    records: list[TweetRecord]
    tweets: list[NewsTweet]
    table: SlantTable
    resolver: ResolverCache


def _quantize(x: np.ndarray, cfg: SynthConfig, k: int) -> np.ndarray:
    return np.clip(np.rint((x + cfg.slant_range) / cfg.slant_step), 0, k - 1).astype(np.int64)


def gen_events(pop: Population, cfg: SynthConfig | None = None) -> Events:
    """Event log with planted per-block slopes.

    Roots are generated first so each follower-tier account sees finished
    feeds; the slant of every tweet is quantised to the nearest outlet on
    the synthetic slant table.
    """
    cfg = cfg or pop.config
    table = slant_table(cfg)
    k = len(table)
    grid = np.array([e.slant for e in table.entries])
    n = pop.graph.n
    counts = np.zeros(n, dtype=np.int64)
    dom: list[np.ndarray] = [np.zeros(0, dtype=np.int64)] * n
    sums = np.zeros(n)
    adj_t = pop.graph.adj_t     # row v: followees of v
    cr, rt = pop.core, pop.root
    order = np.concatenate([np.flatnonzero(cr & rt), np.flatnonzero(cr & ~rt),
                            np.flatnonzero(~cr & rt), np.flatnonzero(~cr & ~rt)])
    for v in order:
        r = _rng(cfg.seed, _EVENTS, v)
        rate = cfg.core_rate if pop.core[v] else cfg.periphery_rate
        if rate > 0 and not cr[v] and cfg.periphery_dispersion > 0:
            shape = cfg.periphery_dispersion
            rate = r.gamma(shape, rate / shape)
        c = int(r.poisson(rate)) if rate > 0 else 0
        if pop.root[v] and pop.core[v]:
            centre = pop.latent[v]
        else:
            fol = adj_t.indices[adj_t.indptr[v]:adj_t.indptr[v + 1]]
            # periphery roots follow only the core; everyone else listens to its own block
            fol = fol[pop.core[fol] == (pop.core[v] or pop.root[v])]
            total = counts[fol].sum()
            slope = cfg.core_slope if pop.core[v] else cfg.periphery_slope
            centre = slope * sums[fol].sum() / total if total else pop.latent[v]
        x = centre + r.normal(0.0, cfg.tweet_noise, size=c)
        d = _quantize(x, cfg, k)
        dom[v] = d
        counts[v] = c
        sums[v] = grid[d].sum()
    records, tweets = [], []
    resolver = ResolverCache(miss_policy="drop")
    for v in range(n):
        if counts[v] == 0:
            continue
        r = _rng(cfg.seed, _EVENTS, v, 1)
        aid = int(pop.graph.ids[v])
        ts = T_START + np.sort(r.uniform(0.0, 13 * 86400.0, size=counts[v]))
        u_short = r.random(counts[v])
        u_rt = r.random(counts[v])
        u_noise = r.random(counts[v])
        codes = r.integers(0, 36**7, size=counts[v])
        for j, d in enumerate(dom[v]):
            tid = f"{aid}-{j}"
            e = table.entries[int(d)]
            story = f"https://www.{e.pattern}/story/{tid}"
            if u_short[j] < cfg.short_link_frac:
                short = f"http://bit.ly/{np.base_repr(int(codes[j]), 36).lower()}-{aid:x}-{j:x}"
                resolver.add(short, story)
                url = short
            else:
                url = story
            urls = [url]
            if u_noise[j] < cfg.noise_url_frac:
                urls.append(f"https://blog.example/post/{tid}")
            rt = bool(u_rt[j] < cfg.retweet_frac)
            records.append(TweetRecord(tid, aid, round(float(ts[j]), 3), tuple(urls), rt))
            tweets.append(NewsTweet(tid, aid, int(d), e.slant, e.quality, rt))
    return Events(records, tweets, table, resolver)


def gen_blocks(n: int, k: int, p_in: float, p_out: float, seed: int) -> tuple[FollowerGraph, np.ndarray]:
    """Undirected planted partition as a reciprocal follow graph.

    Block labels are shuffled over node indices so index order carries no
    block information.  Returns the graph and the label per node index.
    """
    if not (0 <= p_in <= 1 and 0 <= p_out <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if k < 1 or n < k:
        raise ValueError("need 1 <= k <= n")
    labels = _rng(seed, _LABELS, n, k).permutation(np.arange(n) % k)
    a, b = [], []
    for i in range(n - 1):
        u = _rng(seed, _BLOCKS, i).random(n)[i + 1:]
        j = np.arange(i + 1, n)
        p = np.where(labels[j] == labels[i], p_in, p_out)
        hit = j[u < p]
        a.extend([i] * hit.size)
        b.extend(hit.tolist())
    a, b = np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    return FollowerGraph(np.arange(1, n + 1, dtype=np.int64), src, dst), labels


AUDIENCE_CLUSTERS = ("liberal", "mainstream", "conservative")
# row: outlet cluster; columns: share of its audience drawn from each pool
DEFAULT_OVERLAP = ((0.80, 0.17, 0.03),
                   (0.20, 0.75, 0.05),
                   (0.03, 0.07, 0.90))


@dataclass
class Audiences:
    sets: FollowerSets
    planted: list[str]          # cluster per outlet
    anchors: dict[str, list[str]] = field(default_factory=dict)


def gen_audiences(cluster_sizes: tuple[int, int, int] = (30, 40, 30),
                  overlap: tuple[tuple[float, ...], ...] = DEFAULT_OVERLAP,
                  pool_size: int = 2500, size_range: tuple[int, int] = (800, 2400),
                  seed: int = 0, n_anchors: int = 2) -> Audiences:
    """Follower sets for outlets in liberal / mainstream / conservative clusters.

    Each cluster owns a pool of users.  An outlet's audience size is
    log-uniform in ``size_range``; its followers are drawn from the pools in
    the proportions of its ``overlap`` row.
    """
    ov = np.asarray(overlap, dtype=float)
    if ov.shape != (3, 3) or np.any(ov < 0) or not np.allclose(ov.sum(axis=1), 1.0):
        raise ValueError("overlap must be a 3x3 matrix with rows summing to 1")
    lo, hi = size_range
    if not 2 <= lo <= hi:
        raise ValueError("size_range must satisfy 2 <= low <= high")
    names, sets, planted = [], [], []
    idx = 0
    for c, size in enumerate(cluster_sizes):
        for _ in range(size):
            r = _rng(seed, _AUDIENCE, idx)
            f = int(round(np.exp(r.uniform(np.log(lo), np.log(hi)))))
            take = r.multinomial(f, ov[c])
            parts = []
            for pool, t in enumerate(take):
                t = min(int(t), pool_size)
                parts.append(pool * pool_size + r.choice(pool_size, size=t, replace=False))
            names.append(f"outlet{idx:03d}")
            sets.append(np.concatenate(parts) + 1)
            planted.append(AUDIENCE_CLUSTERS[c])
            idx += 1
    anchors = {
        lab: [nm for nm, p in zip(names, planted) if p == lab][:n_anchors]
        for lab in ("liberal", "conservative")
    }
    return Audiences(FollowerSets(names, sets), planted, anchors)


def gen_visits(n_sites: int, n_visits: int, alpha: np.ndarray | None = None,
               gamma: np.ndarray | None = None, seed: int = 0) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int, int]]]:
    """Panel visits from the two-group site-choice logit.

    Liberal (sign -1) and conservative (+1) users split evenly; a user in
    group g picks site j with probability proportional to
    exp(alpha_j + sign_g * gamma_j).  Site 0 is the reference (alpha = gamma = 0).
    Returns (alpha, gamma, [(user, site, conservative)]).
    """
    r = _rng(seed, _VISITS, n_sites)
    if alpha is None:
        alpha = np.concatenate([[0.0], r.normal(0.0, 0.5, n_sites - 1)])
    if gamma is None:
        gamma = np.concatenate([[0.0], r.normal(0.0, 0.5, n_sites - 1)])
    alpha, gamma = np.asarray(alpha, float), np.asarray(gamma, float)
    rows = []
    for grp, sign in enumerate((-1.0, 1.0)):
        u = alpha + sign * gamma
        p = np.exp(u - u.max())
        p /= p.sum()
        m = n_visits // 2 + (n_visits % 2 if grp else 0)
        sites = _rng(seed, _VISITS, n_sites, grp + 1).choice(n_sites, size=m, p=p)
        rows.extend((grp * n_visits + i, int(s), grp) for i, s in enumerate(sites))
    return alpha, gamma, rows


def write_corpus(out: str | Path, pop: Population, events: Events,
                 audiences: Audiences | None = None, visits: list[tuple[int, int, int]] | None = None) -> list[Path]:
    """Write the files the ingest, affinity and logit stages read."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "events.jsonl"
    write_events(events.records, p)
    written.append(p)
    p = out / "edges.tsv"
    write_edges(pop.graph, p)
    written.append(p)
    p = out / "slant_table.csv"
    events.table.save(p)
    written.append(p)
    p = out / "resolver.tsv"
    events.resolver.save(p)
    written.append(p)
    p = out / "truth.csv"
    with open(p, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["account_id", "latent_slant", "core", "root"])
        for i in range(pop.graph.n):
            w.writerow([int(pop.ids[i]), repr(float(pop.latent[i])), int(pop.core[i]), int(pop.root[i])])
    written.append(p)
    if audiences is not None:
        audiences.sets.to_directory(out / "followers")
        p = out / "anchors.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "outlet"])
            for lab in ("liberal", "conservative"):
                for nm in audiences.anchors.get(lab, []):
                    w.writerow([lab, nm])
        written.append(p)
        p = out / "audience_truth.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["outlet", "cluster"])
            for nm, c in zip(audiences.sets.names, audiences.planted):
                w.writerow([nm, c])
        written.append(p)
    if visits is not None:
        p = out / "visits.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user_id", "site_id", "conservative"])
            w.writerows(visits)
        written.append(p)
    p = out / "synth_config.json"
    p.write_text(json.dumps(asdict(pop.config), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(p)
    return written
