"""Correlation matrix construction and bipartite spectral co-clustering."""

import numpy as np
import pytest

from canshape.can_codec import BytePairId
from canshape.cocluster import (
    CanonicalId,
    CoClusterModel,
    ConstantSeries,
    CorrelationMatrix,
    DegenerateRow,
    LengthMismatch,
    cluster_heatmap_order,
    correlation_matrix,
    reorder_matrix,
    spectral_cocluster,
)


def bp(aid, pair=0):
    return BytePairId(aid, pair)


class TestCorrelationMatrix:
    def test_affine_invariance(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=50)
        corr = correlation_matrix({bp(0x100): v, bp(0x200): 2 * v + 3})
        assert corr.M[0, 1] == pytest.approx(1.0)

    def test_negation_gives_minus_one(self):
        v = np.arange(10.0)
        corr = correlation_matrix({bp(0x100): v, bp(0x200): -v})
        assert corr.M[0, 1] == pytest.approx(-1.0)

    def test_hand_computed_pearson(self):
        # mean 2.5 each; cov = 4/3, var = 5/3 each, so r = 4/5
        corr = correlation_matrix(
            {bp(0x100): np.array([1.0, 2, 3, 4]), bp(0x200): np.array([1.0, 3, 2, 4])}
        )
        assert corr.M[0, 1] == pytest.approx(0.8)

    def test_diagonal_and_symmetry(self):
        rng = np.random.default_rng(1)
        series = {bp(a): rng.normal(size=30) for a in (0x100, 0x200, 0x300)}
        corr = correlation_matrix(series)
        np.testing.assert_allclose(np.diag(corr.M), 1.0)
        np.testing.assert_allclose(corr.M, corr.M.T, atol=1e-12)
        assert np.all(corr.M >= -1) and np.all(corr.M <= 1)

    def test_canonical_ids_appended(self):
        rng = np.random.default_rng(2)
        v = rng.normal(size=30)
        corr = correlation_matrix({bp(0x100): v}, canonical={"Speed": v + rng.normal(size=30)})
        assert corr.ids[-1] == CanonicalId("Speed")
        assert str(corr.ids[-1]) == "~Speed"

    def test_constant_series_rejected(self):
        with pytest.raises(ConstantSeries):
            correlation_matrix({bp(0x100): np.ones(10), bp(0x200): np.arange(10.0)})

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            correlation_matrix({bp(0x100): np.arange(10.0), bp(0x200): np.arange(9.0)})


def planted_matrix(seed, blocks=3, size=20, intra=0.9, inter=0.05, sigma=0.02,
                   canonical_state=None):
    """Block-structured correlation matrix with symmetric noise.

    Returns (CorrelationMatrix, true block index per id). If a state name
    is given, the first id of block 0 becomes that state's canonical id.
    """
    rng = np.random.default_rng(seed)
    n = blocks * size
    truth = np.repeat(np.arange(blocks), size)
    M = np.where(truth[:, None] == truth[None, :], intra, inter).astype(float)
    noise = rng.normal(0.0, sigma, (n, n))
    M += (noise + noise.T) / 2.0
    M = np.clip(M, -1.0, 1.0)
    np.fill_diagonal(M, 1.0)
    ids = [bp(0x100 + i // 4, i % 4) for i in range(n)]
    if canonical_state is not None:
        ids[0] = CanonicalId(canonical_state)
    return CorrelationMatrix(tuple(ids), M), truth


def purity(model, corr, truth):
    by_cluster = {}
    for i, sid in enumerate(corr.ids):
        by_cluster.setdefault(model.assignment[sid], []).append(truth[i])
    hits = sum(np.max(np.bincount(members)) for members in
               (np.array(v) for v in by_cluster.values()))
    return hits / len(corr.ids)


class TestSpectralCocluster:
    def test_two_perfect_blocks(self):
        ids = (bp(0x100), bp(0x101), bp(0x200), bp(0x201))
        M = np.array(
            [
                [1.0, 1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 1.0],
                [0.0, 0.0, 1.0, 1.0],
            ]
        )
        model = spectral_cocluster(CorrelationMatrix(ids, M), k=2)
        a = model.assignment
        assert a[ids[0]] == a[ids[1]]
        assert a[ids[2]] == a[ids[3]]
        assert a[ids[0]] != a[ids[2]]
        assert model.disagreement_count == 0

    def test_planted_three_blocks_high_purity(self):
        for seed in range(3):
            corr, truth = planted_matrix(seed)
            model = spectral_cocluster(corr, k=3, seed=seed)
            assert purity(model, corr, truth) >= 0.95

    def test_canonical_labels_attach_to_their_block(self):
        corr, _ = planted_matrix(7, canonical_state="Speed")
        model = spectral_cocluster(corr, k=3, seed=7)
        speed_cluster = model.assignment[CanonicalId("Speed")]
        assert model.labels[speed_cluster] == "Speed"
        assert model.cluster_for_label("Speed") == speed_cluster
        # the label sticks to the block the canonical id actually joined
        block0 = [sid for sid in corr.ids[1:20]]
        same = [model.assignment[sid] == speed_cluster for sid in block0]
        assert np.mean(same) > 0.9

    def test_sign_flip_invariance(self):
        # negating one series negates its correlations; |M| is unchanged
        corr, _ = planted_matrix(3)
        M_flipped = corr.M.copy()
        M_flipped[5, :] *= -1
        M_flipped[:, 5] *= -1
        M_flipped[5, 5] = 1.0
        flipped = CorrelationMatrix(corr.ids, M_flipped)
        a = spectral_cocluster(corr, k=3, seed=0).assignment
        b = spectral_cocluster(flipped, k=3, seed=0).assignment
        assert a == b

    def test_partition_covers_all_ids(self):
        corr, _ = planted_matrix(4)
        model = spectral_cocluster(corr, k=3, seed=0)
        assert set(model.assignment) == set(corr.ids)
        sizes = [len(model.members(c)) for c in range(model.cluster_count)]
        assert sum(sizes) == len(corr.ids)

    def test_permutation_invariance(self):
        corr, _ = planted_matrix(5)
        perm = np.random.default_rng(5).permutation(len(corr.ids))
        shuffled = CorrelationMatrix(
            tuple(corr.ids[i] for i in perm), corr.M[np.ix_(perm, perm)]
        )
        a = spectral_cocluster(corr, k=3, seed=1).assignment
        b = spectral_cocluster(shuffled, k=3, seed=1).assignment
        # same groups up to cluster relabeling
        groups_a = {frozenset(str(s) for s in a if a[s] == c) for c in set(a.values())}
        groups_b = {frozenset(str(s) for s in b if b[s] == c) for c in set(b.values())}
        assert groups_a == groups_b

    def test_seed_stability(self):
        corr, _ = planted_matrix(6)
        a = spectral_cocluster(corr, k=3, seed=9).assignment
        b = spectral_cocluster(corr, k=3, seed=9).assignment
        assert a == b

    def test_degenerate_row(self):
        ids = (bp(0x100), bp(0x200))
        M = np.array([[1.0, 0.0], [0.0, 1.0]])
        # zero out the diagonal too: total edge weight 0 for both nodes
        with pytest.raises(DegenerateRow):
            spectral_cocluster(CorrelationMatrix(ids, np.zeros((2, 2))), k=2)

    def test_k_bounds(self):
        corr, _ = planted_matrix(0, blocks=2, size=3)
        with pytest.raises(ValueError):
            spectral_cocluster(corr, k=1)
        with pytest.raises(ValueError):
            spectral_cocluster(corr, k=7)


class TestHeatmapOrder:
    def test_members_grouped(self):
        a, b, c = bp(0x100), bp(0x200), bp(0x300)
        ids = (a, b, c)
        M = np.eye(3)
        model = CoClusterModel(
            cluster_count=2,
            ids=ids,
            assignment={a: 0, c: 0, b: 1},
            labels={},
            disagreement_count=0,
        )
        order = cluster_heatmap_order(model, CorrelationMatrix(ids, M))
        assert order == [a, c, b]

    def test_planted_blocks_visually_block_diagonal(self):
        corr, truth = planted_matrix(2)
        model = spectral_cocluster(corr, k=3, seed=2)
        order = cluster_heatmap_order(model, corr)
        R = np.abs(reorder_matrix(corr, order))
        blocks = [model.assignment[sid] for sid in order]
        same = np.equal.outer(blocks, blocks)
        off_diag = ~np.eye(len(order), dtype=bool)
        intra = R[same & off_diag].mean()
        inter = R[~same].mean()
        assert intra > inter

    def test_identity_when_one_cluster(self):
        a, b = bp(0x100), bp(0x200)
        model = CoClusterModel(
            cluster_count=1,
            ids=(a, b),
            assignment={a: 0, b: 0},
            labels={},
            disagreement_count=0,
        )
        corr = CorrelationMatrix((a, b), np.eye(2))
        assert cluster_heatmap_order(model, corr) == [a, b]

    def test_labeled_clusters_come_first_in_label_order(self):
        ids = (bp(0x100), bp(0x200), CanonicalId("Brake"), CanonicalId("Speed"))
        model = CoClusterModel(
            cluster_count=3,
            ids=ids,
            assignment={ids[0]: 2, ids[1]: 0, ids[2]: 0, ids[3]: 1},
            labels={0: "Brake", 1: "Speed"},
            disagreement_count=0,
        )
        corr = CorrelationMatrix(ids, np.eye(4))
        order = cluster_heatmap_order(model, corr)
        assert order == [ids[1], ids[2], ids[3], ids[0]]
