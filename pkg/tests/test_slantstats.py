import math

import numpy as np
import pytest

from diversigraph import slantstats, synth
from diversigraph.graph import FollowerGraph, clustering_coefficients
from diversigraph.ingest import NewsTweet
from diversigraph.slantstats import SummaryTable, TweetStats, crosstab, summaries_from_stats
from helpers import random_digraph


def random_tweets(rng, g, n_tweets):
    out = []
    for k in range(n_tweets):
        a = int(g.ids[rng.integers(0, g.n)])
        out.append(NewsTweet(str(k), a, int(rng.integers(0, 20)), float(rng.normal()),
                             float(rng.uniform()), bool(rng.random() < 0.2)))
    return out


def naive_summary(g, tweets):
    """Two passes over raw tweets per account: mean, then squared deviations."""
    A = g.adj.toarray()
    by = {int(i): [] for i in g.ids}
    for t in tweets:
        by[t.author_id].append(t)
    rows = {}
    for i, aid in enumerate(g.ids):
        own = by[int(aid)]
        inc = [t for u in np.flatnonzero(A[:, i]) for t in by[int(g.ids[u])]]

        def stats(ts):
            if not ts:
                return math.nan, 0.0, math.nan
            m = sum(t.slant for t in ts) / len(ts)
            sd = math.sqrt(sum((t.slant - m) ** 2 for t in ts) / len(ts)) if len(ts) > 1 else 0.0
            return m, sd, sum(t.quality for t in ts) / len(ts)

        om, osd, oq = stats(own)
        im, isd, iq = stats(inc)
        rows[int(aid)] = dict(out_mean=om, out_sd=osd, out_count=len(own), out_quality_mean=oq,
                              in_mean=im, in_sd=isd, in_count=len(inc), in_quality_mean=iq,
                              outdegree=int(A[i].sum()), indegree=int(A[:, i].sum()),
                              retweet_count=sum(t.retweet for t in own))
    return rows


def test_summaries_match_two_pass_oracle(rng):
    g = random_digraph(rng, 200, 0.03)
    tweets = random_tweets(rng, g, 900)
    g2, table = slantstats.account_summaries(g, tweets)
    ref = naive_summary(g2, tweets)
    for i, aid in enumerate(table.account_id):
        r = ref[int(aid)]
        for k, v in r.items():
            got = getattr(table, k)[i]
            if isinstance(v, float) and math.isnan(v):
                assert math.isnan(got), (aid, k)
            else:
                assert got == pytest.approx(v, rel=1e-12, abs=1e-12), (aid, k)


def test_sd_exact_for_near_constant_slants():
    g = FollowerGraph.from_id_edges([1], [2])
    base = 1e8
    tweets = [NewsTweet(str(k), 1, 0, base + d, 0.0) for k, d in enumerate((0.0, 1e-3, 2e-3))]
    s = summaries_from_stats(g, TweetStats.from_tweets(g, tweets))
    # offsets from the base are exact, so this is the true SD of the stored values
    expect = np.std([t.slant - base for t in tweets])
    assert s.out_sd[0] == pytest.approx(expect, rel=1e-6)
    assert s.in_sd[1] == pytest.approx(expect, rel=1e-6)


def test_incoming_pools_multiple_followees():
    # 2 follows 1 and 3; incoming SD must pool both multisets, not average their SDs
    g = FollowerGraph.from_id_edges([1, 3], [2, 2])
    tw = [NewsTweet("a", 1, 0, -1.0, 0.0), NewsTweet("b", 1, 0, -1.0, 0.0),
          NewsTweet("c", 3, 0, 2.0, 1.0)]
    s = summaries_from_stats(g, TweetStats.from_tweets(g, tw))
    assert s.in_count[1] == 3
    assert s.in_mean[1] == pytest.approx(0.0)
    assert s.in_sd[1] == pytest.approx(np.std([-1, -1, 2]))
    assert s.in_quality_mean[1] == pytest.approx(1 / 3)
    assert s.has_both.tolist() == [False, False, False]


def test_summary_csv_roundtrip(tmp_path, rng):
    g = random_digraph(rng, 40, 0.1)
    _, table = slantstats.account_summaries(g, random_tweets(rng, g, 100))
    p = tmp_path / "s.csv"
    table.to_csv(p)
    back = SummaryTable.from_csv(p)
    for f in slantstats.SUMMARY_FIELDS:
        np.testing.assert_array_equal(getattr(back, f), getattr(table, f))
    i = int(np.flatnonzero(table.has_both)[0])
    assert back.get(int(table.account_id[i])) == table.row(i)


def test_clustering_column_uses_graph_module(rng):
    g = random_digraph(rng, 30, 0.15)
    _, table = slantstats.account_summaries(g, [])
    np.testing.assert_array_equal(table.clustering_coefficient, clustering_coefficients(g))


def test_crosstab_half_open_bins():
    inc = np.array([-1.5, -1.25, -1.0, 0.0, 2.25, 2.3, np.nan, -1.75])
    out = np.array([-1.5, -1.25, -0.9, 0.1, 2.25, 0.0, 0.0, 0.0])
    ct = crosstab(inc, out)
    assert ct.counts.shape == (8, 8)
    # (-1.75,-1.25] holds -1.5 and -1.25; -1.0 sits in (-1.25,-0.75]
    assert ct.counts[0, 0] == 2
    assert ct.counts[1, 1] == 1
    assert ct.counts[3, 3] == 1
    assert ct.counts[7, 7] == 1
    assert ct.outside == 2          # 2.3 and the lower edge -1.75
    assert ct.counts.sum() + ct.outside == 7
    with pytest.raises(ValueError):
        crosstab([np.nan], [1.0])


def test_crosstab_csv_layout(tmp_path):
    ct = crosstab(np.array([0.1]), np.array([2.0]))
    p = tmp_path / "c.csv"
    ct.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith('out_slant\\in_slant,"(-1.75,-1.25]"')
    assert lines[1] == '"(1.75,2.25]",0,0,0,1,0,0,0,0'


def test_logit_gradient_and_hessian(rng):
    counts = rng.integers(1, 100, size=(2, 5)).astype(float)
    theta = rng.normal(size=8)
    H = slantstats.logit_hessian(theta, counts, 0.1)
    h = 1e-6
    fd = np.column_stack([(slantstats.logit_grad(theta + h * e, counts, 0.1)
                           - slantstats.logit_grad(theta - h * e, counts, 0.1)) / (2 * h)
                          for e in np.eye(8)])
    np.testing.assert_allclose(H, fd, rtol=1e-5, atol=1e-5)
    assert np.all(np.linalg.eigvalsh(H) < 0)


def test_logit_fit_reaches_stationary_point_and_csv(tmp_path):
    alpha, gamma, rows = synth.gen_visits(4, 20_000, seed=1)
    p = tmp_path / "v.csv"
    p.write_text("user_id,site_id,conservative\n" + "".join(f"{u},{s},{c}\n" for u, s, c in rows))
    visits = slantstats.read_visits(p)
    fit = slantstats.fit_slant_logit(visits, 4)
    counts = slantstats.visit_counts(visits, 4)
    theta = np.concatenate([fit.alpha[1:], fit.gamma[1:]])
    assert np.max(np.abs(slantstats.logit_grad(theta, counts))) < 1e-6
    assert fit.alpha[0] == 0 and fit.gamma[0] == 0
    assert np.all(np.abs(fit.gamma - gamma) < 4 * fit.gamma_se + 1e-12)


def test_logit_requires_support_without_ridge():
    counts = np.array([[5.0, 0.0, 3.0], [2.0, 4.0, 1.0]])
    with pytest.raises(ValueError):
        slantstats.fit_slant_logit(counts, 3)
    fit = slantstats.fit_slant_logit(counts, 3, ridge=1.0)
    assert np.all(np.isfinite(fit.gamma))
