from fractions import Fraction

import numpy as np
import pytest

from diversigraph import community, permscore, synth
from diversigraph.graph import FollowerGraph
from helpers import modularity_naive, random_digraph


def naive_greedy(S: np.ndarray):
    """Repeatedly merge the adjacent pair of clusters with the largest exact
    modularity gain (ties: smallest member pair); returns the partition and
    modularity after every merge."""
    n = S.shape[0]
    k = S.sum(axis=1)
    two_m = int(k.sum())
    clusters = [frozenset([i]) for i in range(n)]
    history = []
    while True:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                ca, cb = clusters[a], clusters[b]
                e = sum(int(S[i, j]) for i in ca for j in cb)
                if e == 0:
                    continue
                gain = Fraction(2 * e, two_m) - Fraction(2 * int(k[list(ca)].sum()) * int(k[list(cb)].sum()),
                                                         two_m * two_m)
                key = (gain, -min(min(ca), min(cb)), -max(min(ca), min(cb)))
                if best is None or key > best[0]:
                    best = (key, a, b)
        if best is None:
            return history
        _, a, b = best
        merged = clusters[a] | clusters[b]
        clusters = [c for i, c in enumerate(clusters) if i not in (a, b)] + [merged]
        labels = np.empty(n, dtype=int)
        for ci, c in enumerate(clusters):
            labels[list(c)] = ci
        history.append((sorted(sorted(c) for c in clusters), modularity_naive(S, labels)))


def test_cnm_matches_naive_greedy(rng):
    for trial in range(25):
        n = int(rng.integers(3, 16))
        g = random_digraph(rng, n, float(rng.uniform(0.1, 0.4)))
        S = g.sym.toarray()
        ref = naive_greedy(S)
        d = community.cnm_dendrogram(g)
        assert len(d.merges) == len(ref)
        for step, (parts, q) in enumerate(ref, 1):
            labels = d.partition(step)
            got = sorted(sorted(np.flatnonzero(labels == c).tolist()) for c in np.unique(labels))
            assert got == parts, (trial, step)
            assert d.modularity[step - 1] == pytest.approx(q, abs=1e-12)


def test_cnm_two_cliques():
    # two 4-cliques joined by one bridge
    edges = [(a, b) for blk in (range(4), range(4, 8)) for a in blk for b in blk if a != b]
    edges += [(3, 4), (4, 3)]
    src, dst = zip(*edges)
    g = FollowerGraph(np.arange(8), np.array(src), np.array(dst))
    perm, d = community.cnm_ordering(g)
    labels = d.partition()
    assert len(set(labels[:4])) == 1 and len(set(labels[4:])) == 1 and labels[0] != labels[4]
    assert not d.degenerate
    # clusters stay contiguous in the leaf order
    first = set(perm.order[:4].tolist())
    assert first in ({0, 1, 2, 3}, {4, 5, 6, 7})


def test_cnm_forest_and_component_order():
    g = FollowerGraph.from_id_edges([1, 2, 10, 20, 21], [2, 3, 11, 21, 22], extra_ids=[99])
    perm, d = community.cnm_ordering(g)
    assert len(d.roots) == 4
    # largest component first, singletons last
    assert perm.order[-1] == g.index_of(99)
    assert sorted(perm.order.tolist()) == list(range(g.n))


def test_cnm_degenerate_on_star():
    # merging any leaf into the hub never improves on the singleton start
    n = 6
    src = np.r_[np.zeros(n - 1, int), np.arange(1, n)]
    dst = np.r_[np.arange(1, n), np.zeros(n - 1, int)]
    d = community.cnm_dendrogram(FollowerGraph(np.arange(n), src, dst))
    assert d.degenerate


def test_dendrogram_csv(tmp_path, rng):
    g = random_digraph(rng, 10, 0.3)
    d = community.cnm_dendrogram(g)
    p = tmp_path / "m.csv"
    d.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "step,cluster_a,cluster_b,new_cluster,modularity"
    assert len(lines) == 1 + len(d.merges)
    assert lines[1].split(",")[3] == str(g.n)


def test_spectral_eigenpairs_dense_and_sparse(rng):
    for n in (20, 64, 65, 150):
        g, _ = synth.gen_blocks(n, 2, 0.3, 0.05, seed=n)
        perms, res = community.spectral_orderings(g, k=4)
        L = community.laplacian(g).toarray()
        w = np.linalg.eigvalsh(L)
        np.testing.assert_allclose(res.eigenvalues, w[:5], atol=1e-8)
        for j in range(res.vectors.shape[1]):
            v = res.vectors[:, j]
            assert np.linalg.norm(L @ v - res.eigenvalues[j + 1] * v) <= 1e-6
            assert abs(v.sum()) < 1e-6
            assert v[np.argmax(np.abs(v))] > 0
        assert len(perms) == 4


def test_spectral_recovers_two_blocks():
    g, lab = synth.gen_blocks(120, 2, 0.3, 0.01, seed=4)
    perms, res = community.spectral_orderings(g)
    fiedler = perms[0].order
    first = lab[fiedler[:60]]
    assert len(set(first.tolist())) == 1
    assert not res.degenerate
    idx, best = community.best_spectral_permutation(perms, g)
    scores = [permscore.perm_loglik(g, p) for p in perms]
    assert scores[idx] == max(scores)


def test_spectral_null_graph_flags_degeneracy():
    # no planted structure: the leading eigenvalues are nearly equal
    flagged = 0
    for seed in range(5):
        g, _ = synth.gen_blocks(200, 2, 0.1, 0.1, seed=seed)
        _, res = community.spectral_orderings(g)
        flagged += res.degenerate
    assert flagged == 5


def test_spectral_complete_graph_ties():
    n = 6
    src, dst = np.nonzero(~np.eye(n, dtype=bool))
    _, res = community.spectral_orderings(FollowerGraph(np.arange(n), src, dst), k=3)
    assert res.degenerate


def test_spectral_disconnected_uses_giant_component():
    g = FollowerGraph.from_id_edges([1, 2, 3, 10], [2, 3, 4, 11])
    with pytest.warns(UserWarning):
        perms, res = community.spectral_orderings(g, k=2)
    assert res.nodes.tolist() == [0, 1, 2, 3]
    assert perms[0].n == 4


def test_path_fiedler_monotone():
    n = 90
    idx = np.arange(n - 1)
    g = FollowerGraph(np.arange(n), np.r_[idx, idx + 1], np.r_[idx + 1, idx])
    perms, res = community.spectral_orderings(g, k=2)
    assert np.all(np.diff(res.vectors[:, 0]) > 0) or np.all(np.diff(res.vectors[:, 0]) < 0)
    assert perms[0].order.tolist() in (list(range(n)), list(range(n))[::-1])


def test_compare_orderings(tmp_path):
    g, lab = synth.gen_blocks(80, 2, 0.3, 0.02, seed=2)
    oracle = permscore.slant_permutation(lab.astype(float), g.ids, "oracle")
    rnd = permscore.random_permutation(g.n, 0)
    rows = community.compare_orderings(g, {"oracle": oracle, "random": rnd}, reps=100)
    assert [r.name for r in rows] == ["oracle", "random"]
    assert rows[1].worse_than == ["oracle"] and rows[0].worse_than == []
    p = tmp_path / "c.csv"
    community.write_comparison_csv(rows, p)
    assert p.read_text().splitlines()[2].endswith(",oracle")
    with pytest.raises(ValueError):
        community.compare_orderings(g, {})
