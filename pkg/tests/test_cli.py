import csv
import json
from pathlib import Path

import numpy as np
import pytest

import diversigraph
from diversigraph import cli, ingest, regression, slantstats, svg

DEMO = Path(diversigraph.__file__).parent / "data" / "demo"
CONF = str(DEMO / "demo.conf")


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_unknown_config_key_reports_line(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("# comment\nreps = 10\nrepz = 3\n")
    assert run("crosstab", "--config", conf, "--out", tmp_path / "x.csv") == 2
    err = capsys.readouterr().err
    assert f"{conf}:3: unknown key 'repz'" in err
    with pytest.raises(cli.UsageError, match=":2: expected key = value"):
        conf.write_text("reps = 1\njunk\n")
        cli.read_config(conf)


def test_missing_required_input_and_bad_choice(tmp_path, capsys):
    assert run("regress", "--out", tmp_path / "r.csv") == 2
    assert "missing required input 'summaries'" in capsys.readouterr().err
    assert run("regress", "--config", CONF, "--model", "VII", "--out", tmp_path / "r.csv") == 2
    assert "model must be one of" in capsys.readouterr().err
    assert run("logit", "--visits", tmp_path / "nope.csv", "--out", tmp_path / "l.json") == 2
    assert "input not found" in capsys.readouterr().err
    assert run("crosstab", "--config", CONF, "--threads", "0", "--out", tmp_path / "c.csv") == 2


def test_flags_override_config(tmp_path):
    out = tmp_path / "ct.csv"
    assert run("crosstab", "--config", CONF, "--bin-width", "1.0", "--bin-lo", "-2", "--bin-hi", "2",
               "--out", out) == 0
    header = next(csv.reader(out.open()))
    assert len(header) == 1 + 4
    man = json.loads(Path(str(out) + ".manifest.json").read_text())
    assert man["config"]["bin_width"] == 1.0


def test_summarize_rows_are_event_authors(tmp_path):
    out = tmp_path / "s.csv"
    assert run("summarize", "--config", CONF, "--out", out) == 0
    records, _ = ingest.parse_events(DEMO / "events.jsonl")
    authors = {r.author_id for r in records}
    table = slantstats.SummaryTable.from_csv(out)
    assert len(table) == len(authors)
    assert set(table.account_id.tolist()) == authors


def test_regress_matches_library(tmp_path):
    out = tmp_path / "r.csv"
    assert run("regress", "--config", CONF, "--model", "I", "--out", out) == 0
    fit = regression.fit_model(slantstats.SummaryTable.from_csv(DEMO / "summaries.csv"), "I")
    rows = {r["term"]: r for r in csv.DictReader(out.open())}
    b, se = fit["in_mean"]
    assert float(rows["in_mean"]["estimate"]) == b and float(rows["in_mean"]["se"]) == se
    assert int(rows["n"]["estimate"]) == fit.n


def test_perm_plot_has_one_circle_per_edge(tmp_path):
    out = tmp_path / "p.svg"
    assert run("plot", "--config", CONF, "--kind", "perm", "--perm", "out", "--out", out) == 0
    man = json.loads(Path(str(out) + ".manifest.json").read_text())
    circles = svg.read_circles(out)
    assert len(circles) == man["points"] > 0


def test_manifest_contents_and_replay(tmp_path):
    out = tmp_path / "perm.json"
    assert run("permscore", "--config", CONF, "--reps", "50", "--seed", "4", "--out", out) == 0
    man_path = Path(str(out) + ".manifest.json")
    man = json.loads(man_path.read_text())
    assert man["subcommand"] == "permscore" and man["version"] == diversigraph.__version__
    assert man["seeds"] == [4] and man["config"]["reps"] == 50
    assert set(man["inputs"]) == {"edges", "newstweets"}
    assert man["inputs"]["edges"]["sha256"] == cli.sha256(DEMO / "edges.tsv")
    again = tmp_path / "replay.json"
    assert run("permscore", "--config", man_path, "--out", again) == 0
    assert again.read_bytes() == out.read_bytes()
    rep = json.loads(out.read_text())
    assert rep["reps"] == 50


def test_synth_writes_corpus_and_manifest(tmp_path):
    out = tmp_path / "corpus"
    assert run("synth", "--n-accounts", 300, "--seed", 2, "--audience-sizes", "3,3,3", "--pool-size", 200,
               "--audience-min", 40, "--audience-max", 90, "--n-visits", 500, "--out", out) == 0
    man = json.loads((out / "corpus.manifest.json").read_text())
    assert man["subcommand"] == "synth" and man["seeds"] == [2]
    assert "events.jsonl" in man["files"] and (out / "visits.csv").exists()
    # the synthetic corpus feeds straight back into ingest
    nt = tmp_path / "nt.csv"
    assert run("ingest", "--events", out / "events.jsonl", "--slant-table", out / "slant_table.csv",
               "--resolver", out / "resolver.tsv", "--edges", out / "edges.tsv", "--out", nt) == 0
    assert len(ingest.read_newstweets(nt)) > 0


def test_order_sidecars(tmp_path):
    out = tmp_path / "o.csv"
    assert run("order", "--config", CONF, "--method", "spectral", "--out", out) == 0
    info = json.loads(Path(str(out) + ".eigen.json").read_text())
    assert len(info["eigenvalues"]) >= 2 and isinstance(info["degenerate"], bool)
    ranks = [int(r["rank"]) for r in csv.DictReader(out.open())]
    assert ranks == list(range(1, len(ranks) + 1))
    assert np.all(np.array(info["residuals"]) < 1e-6)


def write_banded_corpus(d: Path, n: int = 12) -> None:
    # reciprocal path 1-2-...-n; account i posts slant i/10, so outgoing slant sorts the path
    with open(d / "edges.tsv", "w") as fh:
        for i in range(1, n):
            fh.write(f"{i}\t{i + 1}\n{i + 1}\t{i}\n")
    with open(d / "newstweets.csv", "w") as fh:
        fh.write("tweet_id,author_id,domain_id,slant,quality,retweet\n")
        for i in range(1, n + 1):
            fh.write(f"t{i},{i},0,{i / 10},0.5,0\n")


def test_perm_plot_on_banded_corpus_hugs_diagonal(tmp_path):
    write_banded_corpus(tmp_path)
    out = tmp_path / "band.svg"
    assert run("plot", "--edges", tmp_path / "edges.tsv", "--newstweets", tmp_path / "newstweets.csv",
               "--subgraph", "all", "--perm", "out", "--out", out) == 0
    circles = svg.read_circles(out)
    assert len(circles) == 22
    n, margin, inner = 12, 48, 480 - 96
    for c in circles:
        rx = 0.5 + (float(c["cx"]) - margin) / inner * n
        ry = 0.5 + (float(c["cy"]) - margin) / inner * n
        assert abs(abs(rx - ry) - 1) < 1e-3


def test_regress_recovers_planted_slope(tmp_path):
    rng = np.random.default_rng(8)
    n = 5000
    x = rng.normal(0, 1, n)
    y = 0.7 * x + rng.normal(0, 0.5, n)
    p = tmp_path / "summ.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(slantstats.SUMMARY_FIELDS)
        for i in range(n):
            w.writerow([i + 1, repr(float(y[i])), 0.1, 3, 0.5, repr(float(x[i])), 0.1, 4, 0.5, 5, 6, 0.2, 0])
    out = tmp_path / "r.csv"
    assert run("regress", "--summaries", p, "--model", "I", "--out", out) == 0
    rows = {r["term"]: r for r in csv.DictReader(out.open())}
    b, se = float(rows["in_mean"]["estimate"]), float(rows["in_mean"]["se"])
    assert abs(b - 0.7) < 3 * se
