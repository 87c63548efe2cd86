import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from spatialspec import (
    DistanceWeightSpec, InvalidArgument, WeightMatrix, build_distance_weights, knn_weights,
    read_weights, simulate_npw_truth, spectral_radius, write_weights,
)


def brute_knn(coords, k):
    n = len(coords)
    out = np.zeros((n, n))
    for i in range(n):
        d = [(np.sum((coords[i] - coords[j]) ** 2), j) for j in range(n) if j != i]
        d.sort()
        for _, j in d[:k]:
            out[i, j] = 1.0 / k
    return out


class TestKnn:
    def test_collinear_k1(self):
        W = knn_weights(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), 1)
        row = W.to_dense()[0]
        assert row[1] == 1.0 and row.sum() == 1.0

    def test_square_k2(self):
        W = knn_weights(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), 2).to_dense()
        expected = np.array([
            [0, 0.5, 0, 0.5],
            [0.5, 0, 0.5, 0],
            [0, 0.5, 0, 0.5],
            [0.5, 0, 0.5, 0],
        ])
        np.testing.assert_array_equal(W, expected)

    def test_n60_rows_sum_to_one(self, rng):
        W = knn_weights(rng.uniform(size=(60, 2)), 60 // 20)
        np.testing.assert_allclose(W.row_sums(), 1.0, atol=1e-12)
        assert np.all(W.matrix.diagonal() == 0)
        assert np.all(np.diff(W.matrix.indptr) == 3)

    def test_matches_brute_force(self, rng):
        coords = rng.uniform(size=(40, 2))
        np.testing.assert_allclose(knn_weights(coords, 4).to_dense(), brute_knn(coords, 4))

    def test_ties_keep_lower_index(self):
        # points 1 and 2 are equidistant from point 0
        W = knn_weights(np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [5.0, 5.0]]), 1).to_dense()
        assert W[0, 1] == 1.0 and W[0, 2] == 0.0

    def test_k_too_large(self, rng):
        with pytest.raises(InvalidArgument):
            knn_weights(rng.uniform(size=(5, 2)), 5)

    def test_unnormalized(self, rng):
        W = knn_weights(rng.uniform(size=(10, 2)), 2, row_normalize=False)
        assert set(W.matrix.data) == {1.0}
        assert W.normalization == "none"

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(5, 30), st.integers(1, 4))
    def test_permutation_equivariant(self, seed, n, k):
        r = np.random.default_rng(seed)
        coords = r.uniform(size=(n, 2))
        perm = r.permutation(n)
        W = knn_weights(coords, k).to_dense()
        Wp = knn_weights(coords[perm], k).to_dense()
        inv = np.argsort(perm)
        np.testing.assert_array_equal(Wp[np.ix_(inv, inv)], W)


class TestWeightMatrix:
    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(InvalidArgument):
            WeightMatrix(np.eye(3))

    def test_rejects_non_square(self):
        with pytest.raises(InvalidArgument):
            WeightMatrix(np.zeros((2, 3)))

    def test_row_normalize(self, rng):
        d = rng.uniform(size=(6, 6))
        np.fill_diagonal(d, 0)
        d[2] = 0
        W = WeightMatrix(d).row_normalize()
        rs = W.row_sums()
        np.testing.assert_allclose(np.delete(rs, 2), 1.0, atol=1e-12)
        assert rs[2] == 0
        W.check()

    def test_spectral_scale(self, rng):
        W = knn_weights(rng.uniform(size=(50, 2)), 3).spectral_scale(1.2)
        assert W.spectral_radius <= 1 / 1.2 + 1e-10
        W.check(spectral=True)

    def test_spectral_radius_row_stochastic(self, rng):
        W = knn_weights(rng.uniform(size=(30, 2)), 3)
        assert spectral_radius(W.matrix) == pytest.approx(1.0, abs=1e-9)

    def test_spectral_radius_large_sparse(self, rng):
        W = knn_weights(rng.uniform(size=(700, 2)), 5)
        assert spectral_radius(W.matrix) == pytest.approx(1.0, abs=1e-8)

    def test_spectral_radius_dense_oracle(self, rng):
        d = rng.uniform(-1, 1, size=(25, 25))
        np.fill_diagonal(d, 0)
        assert spectral_radius(sp.csr_matrix(d)) == pytest.approx(np.max(np.abs(np.linalg.eigvals(d))), rel=1e-9)

    @pytest.mark.parametrize("fmt", ["triplet", "dense"])
    def test_roundtrip(self, tmp_path, rng, fmt):
        W = knn_weights(rng.uniform(size=(12, 2)), 3)
        path = tmp_path / "w.csv"
        write_weights(W, path, fmt)
        back = read_weights(path, 12)
        np.testing.assert_array_equal(back.to_dense(), W.to_dense())

    def test_triplet_header_detected(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("row,col,value\n0,1,1.0\n1,0,0.5\n")
        W = read_weights(path, 3)
        assert W.n == 3 and W.to_dense()[1, 0] == 0.5


class TestDistanceWeights:
    def _spec(self, rng, n=6, order=2, full=False):
        d = rng.uniform(-3, 3, size=(n, n))
        d = np.triu(d, 1) + np.triu(d, 1).T
        mask = np.ones((n, n), bool) if full else rng.uniform(size=(n, n)) < 0.5
        np.fill_diagonal(mask, False)
        return DistanceWeightSpec(d, mask, order)

    def test_zero_coefficients(self, rng):
        W = build_distance_weights(self._spec(rng).with_coefficients([0, 0, 0]))
        assert W.nnz == 0

    def test_ones_off_diagonal(self, rng):
        W = build_distance_weights(self._spec(rng, order=0, full=True).with_coefficients([1.0]))
        np.testing.assert_array_equal(W.to_dense(), 1 - np.eye(6))

    def test_scalar_polynomial(self):
        d = np.zeros((3, 3))
        d[0, 1] = d[1, 0] = 2.0
        mask = np.zeros((3, 3), bool)
        mask[0, 1] = True
        W = build_distance_weights(DistanceWeightSpec(d, mask, 2, [1, 0.5, -0.1]))
        assert W.to_dense()[0, 1] == pytest.approx(1.6, abs=1e-14)
        assert W.nnz == 1

    def test_linear_in_coefficients(self, rng):
        spec = self._spec(rng, n=8, order=3)
        a, b = rng.normal(size=4), rng.normal(size=4)
        Wa = build_distance_weights(spec.with_coefficients(a)).to_dense()
        Wb = build_distance_weights(spec.with_coefficients(b)).to_dense()
        Wab = build_distance_weights(spec.with_coefficients(a + b)).to_dense()
        np.testing.assert_allclose(Wab, Wa + Wb, atol=1e-12)

    def test_basis_matrices_match(self, rng):
        spec = self._spec(rng, order=2)
        a = np.array([0.3, -0.2, 0.05])
        W = build_distance_weights(spec.with_coefficients(a)).to_dense()
        combo = sum(al * m.toarray() for al, m in zip(a, spec.basis_matrices))
        np.testing.assert_allclose(W, combo, atol=1e-14)

    def test_bad_coefficient_length(self, rng):
        with pytest.raises(InvalidArgument):
            self._spec(rng).with_coefficients([1.0])

    def test_mask_diagonal_rejected(self):
        with pytest.raises(InvalidArgument):
            DistanceWeightSpec(np.zeros((2, 2)), np.ones((2, 2), bool), 0)


class TestNpwTruth:
    def test_scaled_radius(self, rng):
        W, d, mask = simulate_npw_truth(200, rng)
        assert W.spectral_radius <= 1 / 1.2 + 1e-8

    def test_density(self, rng):
        n = 400
        _, _, mask = simulate_npw_truth(n, rng)
        frac = mask.sum() / (n * (n - 1))
        se = np.sqrt(0.05 * 0.95 / (n * (n - 1)))
        assert abs(frac - 0.05) < 4 * se

    def test_distances_symmetric_in_range(self, rng):
        _, d, _ = simulate_npw_truth(50, rng)
        np.testing.assert_array_equal(d, d.T)
        assert d.min() >= -3 and d.max() <= 3

    def test_entries_are_scaled_normal_cdf(self, rng):
        W, d, mask = simulate_npw_truth(80, rng)
        dense = W.to_dense()
        ratio = dense[mask] / ndtr(-d[mask])
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)
        assert np.all(dense[~mask] == 0)

    def test_symmetric_mask_switch(self, rng):
        _, _, mask = simulate_npw_truth(60, rng, symmetric_mask=True)
        np.testing.assert_array_equal(mask, mask.T)
