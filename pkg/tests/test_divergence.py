import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repjsd.divergence import (
    CovariancePair,
    cov_from_features,
    hs_lower_bound_gap,
    kernel_matrix_gaussian,
    mmd2_vstat,
    rjsd_cov,
    rjsd_from_gram,
    rjsd_kernel,
    rjsd_mutual_info,
    upper_bound,
)
from repjsd.errors import DimMismatch, RowNotUnitNorm, Unbalanced
from repjsd.features import map_rff, sample_rff
from repjsd.spectral import vn_entropy


def unit_rows(rng, n, d):
    a = rng.standard_normal((n, d))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def two_point_entropy(k):
    # eigenvalues (1 +- k)/2 of the normalized 2x2 Gram [[1, k], [k, 1]] / 2
    lam = np.array([(1 + k) / 2, (1 - k) / 2])
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))


class TestCovFromFeatures:
    def test_repeated_row_is_rank_one(self):
        phi = np.tile([0.6, 0.8], (5, 1))
        lam = np.linalg.eigvalsh(cov_from_features(phi))
        np.testing.assert_allclose(sorted(lam), [0.0, 1.0], atol=1e-12)

    def test_orthonormal_pair(self):
        lam = np.linalg.eigvalsh(cov_from_features(np.eye(2)))
        np.testing.assert_allclose(lam, [0.5, 0.5])

    def test_spectrum_matches_gram(self):
        rng = np.random.default_rng(0)
        phi = unit_rows(rng, 7, 12)
        c = cov_from_features(phi)
        assert np.trace(c) == pytest.approx(1.0, abs=1e-12)
        nonzero_c = np.sort(np.linalg.eigvalsh(c))[-7:]
        nonzero_k = np.sort(np.linalg.eigvalsh(phi @ phi.T / 7))
        np.testing.assert_allclose(nonzero_c, nonzero_k, atol=1e-8)

    def test_rejects_non_unit_rows(self):
        with pytest.raises(RowNotUnitNorm):
            cov_from_features(np.array([[1.0, 1.0]]))


class TestKernelMatrix:
    def test_single_sample(self):
        np.testing.assert_allclose(kernel_matrix_gaussian([[0.3, 2.0]], 1.0).entries, [[1.0]])

    def test_duplicates(self):
        k = kernel_matrix_gaussian([[1.0], [1.0]], 0.5).entries
        np.testing.assert_allclose(k, [[0.5, 0.5], [0.5, 0.5]])
        np.testing.assert_allclose(sorted(np.linalg.eigvalsh(k)), [0.0, 1.0], atol=1e-12)

    def test_vanishing_bandwidth(self):
        X = np.arange(6.0)[:, None]
        k = kernel_matrix_gaussian(X, 1e-6)
        np.testing.assert_allclose(k.entries, np.eye(6) / 6, atol=1e-15)
        assert vn_entropy(k.entries) == pytest.approx(np.log(6))


class TestRjsdCov:
    def test_identical(self):
        c = cov_from_features(unit_rows(np.random.default_rng(1), 10, 4))
        assert rjsd_cov(CovariancePair(c, c, 0.5, 0.5)) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_singletons(self):
        p = CovariancePair.from_features(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
        assert rjsd_cov(p) == pytest.approx(np.log(2), abs=1e-12)

    def test_singletons_with_overlap(self):
        k = 0.5
        p = CovariancePair.from_features(
            np.array([[1.0, 0.0]]), np.array([[k, np.sqrt(1 - k * k)]])
        )
        assert rjsd_cov(p) == pytest.approx(two_point_entropy(k), abs=1e-12)
        assert rjsd_cov(p) == pytest.approx(0.562335, abs=1e-6)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            CovariancePair(np.eye(2) / 2, np.eye(3) / 3, 0.5, 0.5)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 20), m=st.integers(1, 20))
    def test_symmetry_and_bounds(self, seed, n, m):
        rng = np.random.default_rng(seed)
        px, py = unit_rows(rng, n, 5), unit_rows(rng, m, 5)
        a = rjsd_cov(CovariancePair.from_features(px, py))
        b = rjsd_cov(CovariancePair.from_features(py, px))
        assert a == pytest.approx(b, abs=1e-10)
        assert 0.0 <= a <= upper_bound(n, m) + 1e-9
        pi1, pi2 = n / (n + m), m / (n + m)
        assert a <= -pi1 * np.log(pi1) - pi2 * np.log(pi2) + 1e-9


class TestRjsdKernel:
    def test_identical_sets(self):
        X = np.random.default_rng(2).standard_normal((12, 3))
        assert rjsd_kernel(X, X.copy(), 1.0) <= 1e-10

    def test_matches_covariance_route(self):
        rng = np.random.default_rng(3)
        f = sample_rff(3, 16, 1.0, seed=4)
        X, Y = rng.standard_normal((9, 3)), rng.standard_normal((13, 3)) + 0.7
        px, py = map_rff(f, X), map_rff(f, Y)
        pz = np.vstack([px, py])
        via_cov = rjsd_cov(CovariancePair.from_features(px, py))
        via_gram = rjsd_from_gram(pz @ pz.T, len(X))
        assert via_gram == pytest.approx(via_cov, abs=1e-8)

    @pytest.mark.parametrize("dist", [0.3, 1.0, 2.5])
    def test_two_singletons(self, dist):
        sigma = 0.8
        k = np.exp(-(dist**2) / (2 * sigma**2))
        value = rjsd_kernel([[0.0, 0.0]], [[dist, 0.0]], sigma)
        assert value == pytest.approx(two_point_entropy(k), abs=1e-12)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(4)
        X, Y = rng.standard_normal((7, 2)), rng.standard_normal((11, 2))
        assert rjsd_kernel(X, Y, 0.9) == pytest.approx(rjsd_kernel(Y, X, 0.9), abs=1e-10)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            rjsd_kernel(np.zeros((2, 2)), np.zeros((2, 3)), 1.0)


class TestMutualInfo:
    def test_identical(self):
        X = np.random.default_rng(5).standard_normal((10, 2))
        assert abs(rjsd_mutual_info(X, X, 1.0)) <= 1e-8

    def test_matches_kernel_estimator(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            X = rng.standard_normal((15, 3))
            Y = rng.standard_normal((15, 3)) * 1.5 + 0.3
            assert rjsd_mutual_info(X, Y, 1.2) == pytest.approx(rjsd_kernel(X, Y, 1.2), abs=1e-8)

    def test_unbalanced(self):
        with pytest.raises(Unbalanced):
            rjsd_mutual_info(np.zeros((3, 1)), np.zeros((4, 1)), 1.0)


class TestLowerBound:
    def test_identical(self):
        c = np.eye(3) / 3
        assert hs_lower_bound_gap(CovariancePair(c, c, 0.5, 0.5)) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_singletons(self):
        p = CovariancePair.from_features(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
        assert hs_lower_bound_gap(p) == pytest.approx(np.log(2) - 0.25, abs=1e-12)

    def test_random_pairs_nonnegative(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n, m, d = rng.integers(1, 12, size=3)
            p = CovariancePair.from_features(unit_rows(rng, n, d + 1), unit_rows(rng, m, d + 1))
            assert hs_lower_bound_gap(p) >= -1e-9

    def test_balanced_constant_is_one_eighth(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            p = CovariancePair.from_features(unit_rows(rng, 6, 4), unit_rows(rng, 6, 4))
            assert rjsd_cov(p) >= np.sum((p.cx - p.cy) ** 2) / 8 - 1e-9


def test_hs_norm_equals_squared_kernel_mmd():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n, m = rng.integers(2, 20, size=2)
        px, py = unit_rows(rng, n, 6), unit_rows(rng, m, 6)
        p = CovariancePair.from_features(px, py)
        pz = np.vstack([px, py])
        k2 = (pz @ pz.T) ** 2
        assert np.sum((p.cx - p.cy) ** 2) == pytest.approx(mmd2_vstat(k2, n), abs=1e-8)


def test_mixture_entropy_equals_pooled_gram_entropy():
    rng = np.random.default_rng(9)
    px, py = unit_rows(rng, 5, 8), unit_rows(rng, 9, 8)
    p = CovariancePair.from_features(px, py)
    pz = np.vstack([px, py])
    assert vn_entropy(p.mixture) == pytest.approx(vn_entropy(pz @ pz.T / 14), abs=1e-8)
