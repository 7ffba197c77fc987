import json

import numpy as np
import pytest

from diversigraph import slantstats, synth
from diversigraph.graph import degrees


@pytest.fixture(scope="module")
def pop():
    return synth.gen_population(synth.SynthConfig(n_accounts=1500, seed=3))


def test_population_shape(pop):
    cfg = pop.config
    assert pop.core.sum() == 75
    assert pop.graph.ids.tolist() == list(range(1, 1501))
    src, dst = pop.graph.edges()
    # periphery roots only follow core accounts
    pr = pop.root & ~pop.core
    assert np.all(pop.core[src[pr[dst]]])
    # core roots follow nobody in the core
    cr = pop.root & pop.core
    assert not np.any(pop.core[src[cr[dst]]])
    # every core follower-tier account follows the configured number of core roots
    cf = np.flatnonzero(pop.core & ~pop.root)
    n_core_roots = int(cr.sum())
    for v in cf[:10]:
        fol = src[dst == v]
        assert (pop.core[fol] & pop.root[fol]).sum() == min(cfg.follows_core, n_core_roots)


def test_core_accounts_are_most_followed(pop):
    outdeg, _ = degrees(pop.graph)
    assert np.median(outdeg[pop.core]) > 5 * np.median(outdeg[~pop.core])


def test_homophily_visible(pop):
    src, dst = pop.graph.edges()
    d_edges = np.abs(pop.latent[src] - pop.latent[dst]).mean()
    rng = np.random.default_rng(0)
    a, b = rng.integers(0, pop.graph.n, (2, 20000))
    assert d_edges < 0.8 * np.abs(pop.latent[a] - pop.latent[b]).mean()


def test_generation_is_seeded(pop):
    again = synth.gen_population(synth.SynthConfig(n_accounts=1500, seed=3))
    assert (again.graph.adj != pop.graph.adj).nnz == 0
    np.testing.assert_array_equal(again.latent, pop.latent)
    other = synth.gen_population(synth.SynthConfig(n_accounts=1500, seed=4))
    assert (other.graph.adj != pop.graph.adj).nnz > 0


def test_planted_slopes_visible_in_events(pop):
    ev = synth.gen_events(pop)
    stats = slantstats.TweetStats.from_tweets(pop.graph, ev.tweets)
    assert all(t.slant == ev.table.entries[t.domain_id].slant for t in ev.tweets)
    # core followers: outgoing mean against the mean of their core followees' tweets
    A = pop.graph.adj_t
    xs, ys = [], []
    for v in np.flatnonzero(pop.core & ~pop.root):
        fol = A.indices[A.indptr[v]:A.indptr[v + 1]]
        fol = fol[pop.core[fol]]
        c = stats.count[fol].sum()
        if c and stats.count[v]:
            xs.append(stats.slant_sum[fol].sum() / c)
            ys.append(stats.slant_sum[v] / stats.count[v])
    b = np.polyfit(xs, ys, 1)[0]
    assert b == pytest.approx(1.2, abs=0.1)


def test_slant_table_grid():
    cfg = synth.SynthConfig()
    t = synth.slant_table(cfg)
    s = np.array([e.slant for e in t.entries])
    assert len(t) == 161 and s[0] == -4.0 and s[-1] == 4.0
    np.testing.assert_allclose(np.diff(s), 0.05)
    assert t.entries[0].pattern == "outlet000.example"


def test_config_validation():
    with pytest.raises(ValueError):
        synth.SynthConfig(n_accounts=1)


def test_blocks():
    g, lab = synth.gen_blocks(100, 2, 0.3, 0.0, seed=1)
    src, dst = g.edges()
    assert np.all(lab[src] == lab[dst])
    assert (g.adj != g.adj.T).nnz == 0
    assert np.bincount(lab).tolist() == [50, 50]
    dens = g.m / (2 * 50 * 49)
    assert dens == pytest.approx(0.3, abs=0.03)
    g2, lab2 = synth.gen_blocks(100, 2, 0.3, 0.0, seed=1)
    assert np.array_equal(lab, lab2) and (g.adj != g2.adj).nnz == 0
    with pytest.raises(ValueError):
        synth.gen_blocks(10, 2, 1.5, 0.0, 0)


def test_audiences_overlap_structure():
    aud = synth.gen_audiences((5, 5, 5), seed=2)
    assert aud.planted[:5] == ["liberal"] * 5 and aud.anchors["liberal"] == ["outlet000", "outlet001"]
    pool = 2500
    lib = aud.sets.sets[0]
    share_lib_pool = np.mean(lib <= pool)
    assert share_lib_pool == pytest.approx(0.8, abs=0.06)
    sizes = aud.sets.counts
    assert sizes.min() >= 700 and sizes.max() <= 2400
    with pytest.raises(ValueError):
        synth.gen_audiences(overlap=((1, 0, 0), (0, 1, 0), (0.5, 0.6, 0)))


def test_visits_probabilities():
    alpha = np.array([0.0, 1.0, -0.5])
    gamma = np.array([0.0, -1.0, 1.0])
    _, _, rows = synth.gen_visits(3, 60_000, alpha, gamma, seed=0)
    rows = np.array(rows)
    for grp, sign in ((0, -1), (1, 1)):
        u = alpha + sign * gamma
        p = np.exp(u) / np.exp(u).sum()
        obs = np.bincount(rows[rows[:, 2] == grp, 1], minlength=3) / (rows[:, 2] == grp).sum()
        np.testing.assert_allclose(obs, p, atol=0.01)
    assert len(set(rows[:, 0].tolist())) == 60_000


def test_write_corpus(tmp_path, pop):
    ev = synth.gen_events(pop)
    aud = synth.gen_audiences((3, 3, 3), pool_size=200, size_range=(50, 100))
    _, _, visits = synth.gen_visits(3, 100)
    files = synth.write_corpus(tmp_path, pop, ev, aud, visits)
    names = {p.name for p in files}
    assert {"events.jsonl", "edges.tsv", "slant_table.csv", "resolver.tsv", "truth.csv",
            "anchors.csv", "audience_truth.csv", "visits.csv", "synth_config.json"} <= names
    assert len(list((tmp_path / "followers").iterdir())) == 9
    assert json.loads((tmp_path / "synth_config.json").read_text())["seed"] == 3
