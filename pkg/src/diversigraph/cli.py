"""Command-line entry point.

Every subcommand reads its settings from flags and an optional
``--config`` file of ``key = value`` lines (flags win), writes its report to
``--out`` and a run manifest to ``<out>.manifest.json``.  A manifest can be
passed back as ``--config`` to replay the run.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, affinity, community, graph, ingest, permscore, regression, slantstats, svg, synth

log = logging.getLogger("diversigraph")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- option table

def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v) -> list[float]:
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).split(",") if x.strip()]


def _ints(v) -> list[int]:
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [int(x) for x in str(v).split(",") if x.strip()]


def _opt_float(v):
    if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
        return None
    return float(v)


@dataclass(frozen=True)
class Opt:
    key: str
    type: Callable[[Any], Any]
    default: Any
    help: str
    commands: tuple[str, ...]
    choices: tuple[str, ...] | None = None
    path: bool = False      # input file whose digest goes in the manifest


GRAPH_CMDS = ("summarize", "sweep", "permscore", "order", "compare", "plot")
ORDER_CMDS = ("permscore", "order", "compare", "plot")
CRIT_CMDS = ("permscore", "compare")

OPTIONS: list[Opt] = [
    Opt("events", str, None, "JSON-lines event log", ("ingest", "summarize"), path=True),
    Opt("slant_table", str, None, "CSV of pattern,slant,quality,label", ("ingest",), path=True),
    Opt("resolver", str, None, "TSV redirect cache (short, final)", ("ingest",), path=True),
    Opt("miss_policy", str, "drop", "shortener URLs missing from the cache", ("ingest",),
        choices=ingest.MISS_POLICIES),
    Opt("max_age", _opt_float, None, "discard events older than this many seconds before the newest",
        ("ingest",)),
    Opt("edges", str, None, "tab-separated followee,follower edge list",
        ("ingest", *GRAPH_CMDS), path=True),
    Opt("newstweets", str, None, "matched news tweets from the ingest step", GRAPH_CMDS, path=True),
    Opt("summaries", str, None, "account summaries CSV", ("crosstab", "regress"), path=True),
    Opt("bin_width", float, 0.5, "crosstab bin width", ("crosstab",)),
    Opt("bin_lo", float, -1.75, "crosstab lower edge", ("crosstab",)),
    Opt("bin_hi", float, 2.25, "crosstab upper edge", ("crosstab",)),
    Opt("model", str, "I", "regression model", ("regress",), choices=tuple(regression.MODELS)),
    Opt("mode", str, "within_core", "sweep regression mode", ("sweep",), choices=regression.MODES),
    Opt("s_grid", _floats, [0.75, 0.8, 0.85, 0.9, 0.95], "outdegree quantiles", ("sweep",)),
    Opt("t_grid", _floats, [0.75, 0.8, 0.85, 0.9, 0.95], "news-post quantiles", ("sweep",)),
    Opt("value", str, "slope", "grid cell content", ("sweep",), choices=("slope", "n", "long")),
    Opt("subgraph", str, "core", "node set to order", ORDER_CMDS, choices=("core", "moderate", "all")),
    Opt("s", float, 0.9, "core outdegree quantile", ORDER_CMDS),
    Opt("t", float, 0.9, "core news-post quantile", ORDER_CMDS),
    Opt("perm", str, "out", "ordering to score or plot", ("permscore", "plot"),
        choices=("in", "out", "spectral", "cnm")),
    Opt("method", str, "spectral", "ordering method", ("order",), choices=("spectral", "cnm")),
    Opt("k", int, 5, "number of Laplacian eigenvectors tried", ORDER_CMDS),
    Opt("reps", int, 1000, "bootstrap replicates", CRIT_CMDS),
    Opt("frac", float, 0.05, "fraction of nodes displaced per replicate", CRIT_CMDS),
    Opt("q", float, 0.95, "quantile of the reduction distribution", CRIT_CMDS),
    Opt("seed", int, 0, "random seed", ("permscore", "compare", "synth")),
    Opt("followers", str, None, "directory with one follower-id file per outlet", ("affinity", "plot"),
        path=True),
    Opt("anchors", str, None, "anchors CSV (label,outlet)", ("affinity",), path=True),
    Opt("slants", str, None, "slants CSV from the affinity step", ("plot",), path=True),
    Opt("min_followers", int, affinity.MIN_FOLLOWERS, "drop outlets with fewer followers",
        ("affinity", "plot")),
    Opt("bot_threshold", _opt_float, affinity.BOT_THRESHOLD,
        "drop followers with bot score at or above this (none = keep all)", ("affinity", "plot")),
    Opt("w_min", float, 0.3, "minimum scaled affinity kept", ("affinity",)),
    Opt("deg_min", int, 5, "minimum degree after edge pruning", ("affinity",)),
    Opt("iterate_prune", _bool, False, "repeat degree pruning until stable", ("affinity",)),
    Opt("gamma", float, 1.0, "spin-glass resolution", ("affinity",)),
    Opt("seeds", _ints, [0, 1, 2], "annealing seeds (best modularity wins)", ("affinity",)),
    Opt("n_states", int, 25, "spin states", ("affinity",)),
    Opt("sweeps_per_node", int, 50, "annealing sweeps per outlet", ("affinity",)),
    Opt("kind", str, "perm", "figure type", ("plot",), choices=("perm", "affinity")),
    Opt("visits", str, None, "visits CSV (user_id,site_id,conservative)", ("logit",), path=True),
    Opt("n_sites", int, None, "number of sites (default: max site_id + 1)", ("logit",)),
    Opt("ridge", float, 0.0, "ridge penalty", ("logit",)),
    Opt("n_accounts", int, 2000, "accounts in the synthetic population", ("synth",)),
    Opt("core_frac", float, 0.05, "planted core fraction", ("synth",)),
    Opt("homophily", float, 1.0, "homophily strength", ("synth",)),
    Opt("core_slope", float, 1.2, "planted core slope", ("synth",)),
    Opt("periphery_slope", float, 0.7, "planted periphery slope", ("synth",)),
    Opt("core_rate", float, 50.0, "mean news posts of a core account", ("synth",)),
    Opt("periphery_rate", float, 2.0, "mean news posts of a periphery account", ("synth",)),
    Opt("audience_sizes", _ints, [30, 40, 30], "liberal,mainstream,conservative outlet counts", ("synth",)),
    Opt("pool_size", int, 2500, "users per audience pool", ("synth",)),
    Opt("audience_min", int, 800, "smallest outlet audience", ("synth",)),
    Opt("audience_max", int, 2400, "largest outlet audience", ("synth",)),
    Opt("n_visits", int, 0, "synthetic panel visits (0 = none)", ("synth",)),
    Opt("visit_sites", int, 10, "sites in the synthetic panel", ("synth",)),
]
BY_KEY = {o.key: o for o in OPTIONS}
COMMANDS = ("ingest", "summarize", "crosstab", "regress", "sweep", "permscore", "order", "compare",
            "affinity", "synth", "plot", "logit")
REQUIRED = {
    "ingest": ("events", "slant_table"),
    "summarize": ("edges", "newstweets"),
    "crosstab": ("summaries",),
    "regress": ("summaries",),
    "sweep": ("edges", "newstweets"),
    "permscore": ("edges", "newstweets"),
    "order": ("edges", "newstweets"),
    "compare": ("edges", "newstweets"),
    "affinity": ("followers", "anchors"),
    "logit": ("visits",),
}


def read_config(path: str | Path) -> dict[str, Any]:
    """Parse a ``key = value`` file, or take the ``config`` map of a manifest."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        obj = json.loads(text)
        cfg = obj.get("config", obj)
        for k in cfg:
            if k not in BY_KEY:
                raise UsageError(f"{path}: unknown key {k!r}")
        return dict(cfg)
    cfg: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value: {raw.strip()}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in BY_KEY:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}: {raw.strip()}")
        cfg[key] = val
    return cfg


def resolve(cmd: str, flags: dict[str, Any], cfg_file: dict[str, Any], base: Path | None) -> dict[str, Any]:
    out = {}
    for o in OPTIONS:
        if cmd not in o.commands:
            continue
        v = flags.get(o.key)
        if v is None and o.key in cfg_file:
            v = cfg_file[o.key]
            if o.path and v is not None and base is not None and not Path(v).is_absolute():
                cand = base / v
                if cand.exists():
                    v = str(cand)
        if v is None:
            v = o.default
        if v is not None:
            try:
                v = o.type(v)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {o.key}: {exc}") from None
        if o.choices and v is not None and v not in o.choices:
            raise UsageError(f"{o.key} must be one of {list(o.choices)}, got {v!r}")
        out[o.key] = v
    for k in REQUIRED.get(cmd, ()):
        if out.get(k) is None:
            raise UsageError(f"{cmd}: missing required input '{k}'")
    for o in OPTIONS:
        if o.path and out.get(o.key) is not None and not Path(out[o.key]).exists():
            raise UsageError(f"{cmd}: input not found: {out[o.key]}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diversigraph", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="key = value file or a run manifest")
        sp.add_argument("--out", required=True, help="report path (directory for synth)")
        sp.add_argument("--threads", type=int, default=1, help="parallelism cap (results unchanged)")
        sp.add_argument("--log-level", default="WARNING")
        for o in OPTIONS:
            if cmd in o.commands:
                sp.add_argument("--" + o.key.replace("_", "-"), dest=o.key, default=None,
                                help=f"{o.help} (default: {o.default})")
    return p


# ---------------------------------------------------------------- helpers

def sha256(path: str | Path) -> str:
    p = Path(path)
    h = hashlib.sha256()
    files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p]
    for f in files:
        if p.is_dir():
            h.update(str(f.relative_to(p)).encode())
        with open(f, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, cmd: str, cfg: dict[str, Any], seeds: list[int], started: float,
                   extra: dict[str, Any] | None = None) -> Path:
    inputs = {o.key: {"path": str(cfg[o.key]), "sha256": sha256(cfg[o.key])}
              for o in OPTIONS if o.path and cfg.get(o.key) is not None}
    man = {
        "subcommand": cmd,
        "config": cfg,
        "inputs": inputs,
        "seeds": seeds,
        "version": __version__,
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(timespec="seconds"),
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    if extra:
        man.update(extra)
    path = Path(str(out) + ".manifest.json")
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_network(cfg):
    g, _ = ingest.load_edges(cfg["edges"])
    tweets = ingest.read_newstweets(cfg["newstweets"])
    g = g.with_nodes({t.author_id for t in tweets})
    return g, slantstats.TweetStats.from_tweets(g, tweets)


def order_nodes(g, stats, cfg):
    """Node indices for the ordering analysis.

    The chosen block is cut to accounts with both slant means defined and
    then to its giant weak component, so every ordering covers the same set.
    """
    outdeg, _ = graph.degrees(g)
    which = cfg["subgraph"]
    if which == "core":
        nodes = graph.core_members(outdeg, stats.count, cfg["s"], cfg["t"]).members
    elif which == "moderate":
        nodes = graph.moderate_members(g, stats.count)
    else:
        nodes = np.arange(g.n)
    summ = slantstats.summaries_from_stats(g, stats, clustering=np.zeros(g.n))
    nodes = nodes[summ.has_both[nodes]]
    if nodes.size < 2:
        raise UsageError(f"{which} subgraph has fewer than two accounts with slant data")
    sub = g.subgraph(nodes)
    comp = graph.giant_component(sub)
    if comp.size < nodes.size:
        log.warning("using giant component: %d of %d accounts", comp.size, nodes.size)
    nodes = nodes[comp]
    return nodes, g.subgraph(nodes), summ


def build_ordering(kind: str, sub, summ, cfg) -> tuple[permscore.Permutation, dict]:
    info: dict[str, Any] = {}
    if kind in ("in", "out"):
        key = "in_mean" if kind == "in" else "out_mean"
        return permscore.summary_permutation(summ, key, sub), info
    if kind == "spectral":
        perms, res = community.spectral_orderings(sub, cfg["k"])
        best, perm = community.best_spectral_permutation(perms, sub)
        res.chosen = best
        info = {"eigenvalues": res.eigenvalues.tolist(), "residuals": res.residuals.tolist(),
                "chosen": best, "degenerate": res.degenerate}
        return perm, info
    perm, dend = community.cnm_ordering(sub)
    info = {"dendrogram": dend}
    return perm, info


PERM_NAMES = {"in": "incoming_slant", "out": "outgoing_slant", "spectral": "spectral", "cnm": "cnm"}


# ---------------------------------------------------------------- subcommands

def cmd_ingest(cfg, out: Path, threads: int) -> dict:
    records, pc = ingest.parse_events(cfg["events"])
    table = ingest.SlantTable.load(cfg["slant_table"])
    resolver = (ingest.ResolverCache.load(cfg["resolver"], cfg["miss_policy"]) if cfg["resolver"]
                else ingest.ResolverCache(miss_policy=cfg["miss_policy"]))
    tweets, uc = ingest.process_urls(records, resolver, table, cfg["max_age"])
    ingest.write_newstweets(tweets, out)
    counters = {"events": vars(pc), "urls": {**vars(uc), "dropped": uc.dropped}}
    if cfg["edges"]:
        _, _, ec = ingest.read_edges(cfg["edges"])
        counters["edges"] = vars(ec)
    return {"counters": counters}


def cmd_summarize(cfg, out: Path, threads: int) -> dict:
    g, stats = load_network(cfg)
    table = slantstats.summaries_from_stats(g, stats)
    if cfg["events"]:
        records, _ = ingest.parse_events(cfg["events"])
        active = {r.author_id for r in records}
    else:
        active = set(g.ids[stats.count > 0].tolist())
    mask = np.isin(table.account_id, np.fromiter(active, dtype=np.int64, count=len(active)))
    table.select(mask).to_csv(out)
    return {"rows": int(mask.sum())}


def cmd_crosstab(cfg, out: Path, threads: int) -> dict:
    s = slantstats.SummaryTable.from_csv(cfg["summaries"])
    ct = slantstats.crosstab(s.in_mean, s.out_mean, cfg["bin_width"], cfg["bin_lo"], cfg["bin_hi"])
    ct.to_csv(out)
    return {"outside": ct.outside}


def cmd_regress(cfg, out: Path, threads: int) -> dict:
    s = slantstats.SummaryTable.from_csv(cfg["summaries"])
    fit = regression.fit_model(s, cfg["model"])
    regression.write_fit_csv(fit, out)
    return {"n": fit.n}


def cmd_sweep(cfg, out: Path, threads: int) -> dict:
    g, stats = load_network(cfg)
    res = regression.core_sweep(g, stats, cfg["s_grid"], cfg["t_grid"], cfg["mode"], threads)
    if cfg["value"] == "long":
        res.to_long_csv(out)
    else:
        res.to_grid_csv(out, cfg["value"])
    return {}


def cmd_permscore(cfg, out: Path, threads: int) -> dict:
    g, stats = load_network(cfg)
    _, sub, summ = order_nodes(g, stats, cfg)
    perm, _ = build_ordering(cfg["perm"], sub, summ, cfg)
    ll = permscore.perm_loglik(sub, perm)
    cv = permscore.critical_value(sub, perm, cfg["frac"], cfg["reps"], cfg["q"], cfg["seed"], threads)
    permscore.write_report(out, PERM_NAMES[cfg["perm"]], ll, cv, sub.n, sub.m)
    return {}


def cmd_order(cfg, out: Path, threads: int) -> dict:
    g, stats = load_network(cfg)
    _, sub, summ = order_nodes(g, stats, cfg)
    perm, info = build_ordering(cfg["method"], sub, summ, cfg)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "account_id"])
        for r, node in enumerate(perm.order, 1):
            w.writerow([r, int(sub.ids[node])])
    extra = Path(str(out) + (".merges.csv" if cfg["method"] == "cnm" else ".eigen.json"))
    if cfg["method"] == "cnm":
        info["dendrogram"].to_csv(extra)
    else:
        _json_dump(info, extra)
    return {"sidecar": str(extra)}


def cmd_compare(cfg, out: Path, threads: int) -> dict:
    g, stats = load_network(cfg)
    _, sub, summ = order_nodes(g, stats, cfg)
    perms = {PERM_NAMES[k]: build_ordering(k, sub, summ, cfg)[0] for k in ("in", "out", "spectral", "cnm")}
    rows = community.compare_orderings(sub, perms, cfg["frac"], cfg["reps"], cfg["q"], cfg["seed"], threads)
    community.write_comparison_csv(rows, out)
    return {}


def _follower_sets(cfg):
    return affinity.FollowerSets.from_directory(cfg["followers"], cfg["min_followers"], cfg["bot_threshold"])


def cmd_affinity(cfg, out: Path, threads: int) -> dict:
    sets = _follower_sets(cfg)
    anchors = affinity.read_anchors(cfg["anchors"])
    res = affinity.run_pipeline(sets, anchors, cfg["w_min"], cfg["deg_min"], cfg["iterate_prune"],
                                cfg["gamma"], cfg["seeds"], cfg["n_states"], cfg["sweeps_per_node"])
    affinity.write_slants(out, res.names, res.scores, res.labels)
    return {"excluded": sets.excluded, "pruned": [res.names[i] for i in res.pruned.pruned],
            "communities": res.partition.n_communities, "modularity": res.partition.modularity,
            "best_seed": res.partition.seed}


def cmd_synth(cfg, out: Path, threads: int) -> dict:
    sc = synth.SynthConfig(n_accounts=cfg["n_accounts"], seed=cfg["seed"], core_frac=cfg["core_frac"],
                           homophily=cfg["homophily"], core_slope=cfg["core_slope"],
                           periphery_slope=cfg["periphery_slope"], core_rate=cfg["core_rate"],
                           periphery_rate=cfg["periphery_rate"])
    pop = synth.gen_population(sc)
    events = synth.gen_events(pop)
    sizes = cfg["audience_sizes"]
    aud = None
    if sizes and sum(sizes) > 0:
        if len(sizes) != 3:
            raise UsageError("audience_sizes needs three counts")
        aud = synth.gen_audiences(tuple(sizes), pool_size=cfg["pool_size"],
                                  size_range=(cfg["audience_min"], cfg["audience_max"]), seed=cfg["seed"])
    visits = None
    if cfg["n_visits"] > 0:
        _, _, visits = synth.gen_visits(cfg["visit_sites"], cfg["n_visits"], seed=cfg["seed"])
    written = synth.write_corpus(out, pop, events, aud, visits)
    return {"files": [str(p.relative_to(out)) for p in written]}


def cmd_plot(cfg, out: Path, threads: int) -> dict:
    if cfg["kind"] == "affinity":
        if not cfg["slants"] or not cfg["followers"]:
            raise UsageError("plot --kind affinity needs --slants and --followers")
        sets = _follower_sets(cfg)
        counts = dict(zip(sets.names, sets.counts.tolist()))
        xs, ys, cls = [], [], []
        with open(cfg["slants"], newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["score"] == "" or row["outlet"] not in counts:
                    continue
                xs.append(float(row["score"]))
                ys.append(math.log(counts[row["outlet"]]))
                cls.append(row["cluster"])
        svg.scatter(out, np.array(xs), np.array(ys), title="Outlet slant vs audience size",
                    xlabel="slant score", ylabel="ln(# followers)", classes=cls)
        return {"points": len(xs)}
    if not cfg["edges"] or not cfg["newstweets"]:
        raise UsageError("plot --kind perm needs --edges and --newstweets")
    g, stats = load_network(cfg)
    _, sub, summ = order_nodes(g, stats, cfg)
    perm, _ = build_ordering(cfg["perm"], sub, summ, cfg)
    pts = permscore.permuted_matrix_figure(sub, perm)
    lim = (0.5, sub.n + 0.5)
    svg.scatter(out, pts[:, 1], pts[:, 0], title=f"Adjacency permuted by {PERM_NAMES[cfg['perm']]}",
                xlabel="rank of follower", ylabel="rank of followee", invert_y=True, xlim=lim, ylim=lim)
    return {"points": int(pts.shape[0])}


def cmd_logit(cfg, out: Path, threads: int) -> dict:
    visits = slantstats.read_visits(cfg["visits"])
    n_sites = cfg["n_sites"] or (max(v.site_id for v in visits) + 1 if visits else 0)
    fit = slantstats.fit_slant_logit(visits, n_sites, cfg["ridge"])
    _json_dump({"alpha": fit.alpha.tolist(), "gamma": fit.gamma.tolist(),
                "alpha_se": fit.alpha_se.tolist(), "gamma_se": fit.gamma_se.tolist(),
                "loglik": fit.loglik, "iterations": fit.iterations, "n_sites": n_sites,
                "visits": len(visits)}, out)
    return {}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    cmd = args.command
    try:
        cfg_file: dict[str, Any] = {}
        base = None
        if args.config:
            if not Path(args.config).exists():
                raise UsageError(f"config file not found: {args.config}")
            cfg_file = read_config(args.config)
            base = Path(args.config).resolve().parent
        flags = {o.key: getattr(args, o.key, None) for o in OPTIONS}
        cfg = resolve(cmd, flags, cfg_file, base)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        out = Path(args.out)
        if cmd != "synth":
            out.parent.mkdir(parents=True, exist_ok=True)
        extra = HANDLERS[cmd](cfg, out, args.threads)
    except (UsageError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"diversigraph {cmd}: error: {exc}", file=sys.stderr)
        return 2
    seeds = cfg.get("seeds") or ([cfg["seed"]] if cfg.get("seed") is not None else [])
    manifest_target = out / "corpus" if cmd == "synth" else out
    write_manifest(manifest_target, cmd, cfg, seeds, started, extra)
    return 0


if __name__ == "__main__":
    sys.exit(main())
