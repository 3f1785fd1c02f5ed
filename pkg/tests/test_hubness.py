import numpy as np
import pytest

from lorentzheads import geometry as G
from lorentzheads import heads as H
from lorentzheads import hubness
from lorentzheads.errors import ContractError, ParameterError


def brute_force_k_occurrence(D, k):
    """Independent O(N^2) scan: sort (distance, index) pairs per row."""
    N = D.shape[0]
    counts = [0] * N
    for i in range(N):
        pairs = sorted((D[i, j], j) for j in range(N) if j != i)
        for _, j in pairs[:k]:
            counts[j] += 1
    return np.asarray(counts)


class TestPairwiseDistances:
    def test_identical_points(self):
        P = np.stack([G.exp_map_origin([0.5, 0.5])] * 2)
        D = hubness.pairwise_distances(P, "hyperbolic")
        assert D[0, 1] == pytest.approx(0.0, abs=1e-7)

    def test_geometry_oracle(self):
        P = np.stack([G.origin(1), [np.cosh(1.0), np.sinh(1.0)]])
        D = hubness.pairwise_distances(P, "hyperbolic")
        assert D[0, 1] == pytest.approx(1.0)

    def test_antipodal_cosine(self):
        D = hubness.pairwise_distances([[1.0, 0.0], [-1.0, 0.0]], "cosine")
        assert D[0, 1] == pytest.approx(2.0)

    def test_symmetric_zero_diagonal(self, rng):
        P = G.batch_exp_map_origin(rng.normal(0.0, 1.0, (8, 3)))
        D = hubness.pairwise_distances(P, "hyperbolic")
        np.testing.assert_array_equal(D, D.T)
        np.testing.assert_array_equal(np.diag(D), np.zeros(8))

    def test_unknown_kind(self):
        with pytest.raises(ContractError):
            hubness.pairwise_distances(np.eye(3), "manhattan")


class TestKOccurrence:
    def test_collinear_oracle(self):
        pts = np.array([0.0, 1.0, 2.0, 10.0])
        D = np.abs(pts[:, None] - pts[None, :])
        occ = hubness.k_occurrence(D, 1)
        np.testing.assert_array_equal(occ.counts, [1, 2, 1, 0])

    def test_counts_sum_is_k_times_n(self, rng):
        for _ in range(10):
            X = rng.normal(size=(20, 4))
            D = np.linalg.norm(X[:, None] - X[None, :], axis=-1)
            for k in (1, 3, 7):
                occ = hubness.k_occurrence(D, k)
                assert occ.counts.sum() == k * 20

    def test_matches_brute_force(self, rng):
        for N in (10, 30, 50):
            X = rng.normal(size=(N, 5))
            D = np.linalg.norm(X[:, None] - X[None, :], axis=-1)
            for k in (1, 5, N - 1):
                occ = hubness.k_occurrence(D, k)
                np.testing.assert_array_equal(occ.counts, brute_force_k_occurrence(D, k))

    def test_simplex_all_counts_equal(self):
        # orthonormal rows: all pairwise cosine distances equal; with
        # k = N - 1 every point is everyone's neighbor
        N = 8
        D = hubness.pairwise_distances(np.eye(N), "cosine")
        occ = hubness.k_occurrence(D, N - 1)
        np.testing.assert_array_equal(occ.counts, np.full(N, N - 1))
        assert occ.skewness == 0.0

    def test_ring_symmetry_skewness_zero(self):
        # evenly spaced directions on a circle; k=2 picks both angular
        # neighbors for every point
        N = 12
        ang = 2 * np.pi * np.arange(N) / N
        P = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        occ = hubness.k_occurrence(hubness.pairwise_distances(P, "cosine"), 2)
        np.testing.assert_array_equal(occ.counts, np.full(N, 2))
        assert occ.skewness == 0.0

    def test_monotone_transform_invariance(self, rng):
        X = rng.normal(size=(25, 4))
        D = np.linalg.norm(X[:, None] - X[None, :], axis=-1)
        a = hubness.k_occurrence(D, 5)
        b = hubness.k_occurrence(2.0 * D + 1.0, 5)
        np.testing.assert_array_equal(a.counts, b.counts)
        assert a.skewness == b.skewness

    def test_k_bounds(self):
        D = np.zeros((4, 4))
        with pytest.raises(ParameterError):
            hubness.k_occurrence(D, 4)
        with pytest.raises(ParameterError):
            hubness.k_occurrence(D, 0)


class TestSkewness:
    def test_zero_variance(self):
        assert hubness.sample_skewness([3, 3, 3]) == 0.0

    def test_matches_definition(self, rng):
        v = rng.normal(size=200)
        m = v.mean()
        ref = np.mean((v - m) ** 3) / np.mean((v - m) ** 2) ** 1.5
        assert hubness.sample_skewness(v) == pytest.approx(ref)

    def test_positive_for_planted_hub(self, rng):
        # one centroid prototype among far-apart satellites becomes everyone's
        # nearest neighbor
        satellites = G.batch_exp_map_origin(3.0 * np.eye(6))
        hub = G.origin(6)[None, :]
        P = np.concatenate([hub, satellites])
        occ = hubness.k_occurrence(hubness.pairwise_distances(P, "hyperbolic"), 1)
        assert occ.counts[0] == 6
        assert occ.skewness > 0.0


class TestReports:
    def test_histogram_counts_all_pairs(self, rng):
        P = G.batch_exp_map_origin(rng.normal(0.0, 1.0, (10, 4)))
        rep = hubness.analyze_points(P, "hyperbolic", k=3)
        assert rep.histogram.counts.sum() == 10 * 9 // 2

    def test_bank_dispatch(self, rng):
        hyp = H.PrototypeBank(
            H.MODE_HYPERBOLIC,
            G.batch_exp_map_origin(rng.normal(0.0, 1.0, (6, 3))),
            [f"c{i}" for i in range(6)],
        )
        cos = H.PrototypeBank(H.MODE_COSINE, rng.normal(size=(6, 3)),
                              [f"c{i}" for i in range(6)])
        assert hubness.hubness_report(hyp).kind == "hyperbolic"
        assert hubness.hubness_report(cos).kind == "cosine"

    def test_report_files(self, tmp_path, rng):
        P = G.batch_exp_map_origin(rng.normal(0.0, 1.0, (8, 3)))
        rep = hubness.analyze_points(P, "hyperbolic", k=3)
        path = tmp_path / "report.json"
        rep.save(path)
        assert path.exists()
        csv_lines = (tmp_path / "report.csv").read_text().strip().splitlines()
        assert csv_lines[0] == "bin_center,count"
        total = sum(int(line.split(",")[1]) for line in csv_lines[1:])
        assert total == 8 * 7 // 2

        from lorentzheads.schemas import validate_file
        validate_file(path, "hubness_report")
