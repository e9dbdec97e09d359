import math

import numpy as np
import pytest
from scipy import stats

from repjsd.data import TEST_STREAM, TRAIN_STREAM
from repjsd.divergence import rjsd_cov, rjsd_kernel, upper_bound, CovariancePair
from repjsd.errors import DimMismatch, InsufficientData
from repjsd.features import build_dffn, dffn_forward
from repjsd.tst import (
    DatasetSpec,
    FeatureEmbedding,
    KernelEmbedding,
    TstConfig,
    _kernel_value_and_grad,
    draw_pair,
    null_threshold,
    permutation_test,
    run_power_experiment,
    summarize,
    train_embedding,
    train_test_split,
)


def rff_embedding(d, n_freq=10, sigma=1.0, seed=0):
    return FeatureEmbedding(build_dffn(d, [], n_freq, sigma=sigma, seed=seed))


class TestThreshold:
    def test_ninety_sixth_of_hundred(self):
        assert null_threshold(np.arange(100.0)[::-1], 0.05) == 95.0

    def test_too_few_permutations_never_rejects(self):
        assert null_threshold(np.arange(5.0), 0.05) == math.inf

    def test_binomial_interval(self):
        # acceptance band for 100 tests at level 0.05
        assert stats.binom.interval(0.95, 100, 0.05) == (1.0, 10.0)


class TestPermutationTest:
    def test_report_fields_and_bounds(self):
        rng = np.random.default_rng(0)
        X, Y = rng.standard_normal((30, 2)), rng.standard_normal((25, 2))
        rep = permutation_test(X, Y, rff_embedding(2), TstConfig(permutations=40), seed=1)
        assert len(rep.null_samples) == 40
        assert 0.0 <= rep.statistic <= upper_bound(30, 25) + 1e-9
        assert rep.reject == (rep.statistic > rep.null_quantile)

    def test_statistic_matches_estimators(self):
        rng = np.random.default_rng(1)
        X, Y = rng.standard_normal((12, 2)), rng.standard_normal((15, 2)) + 1
        emb = rff_embedding(2, 20)
        rep = permutation_test(X, Y, emb, TstConfig(permutations=5))
        px, py = emb.represent(X), emb.represent(Y)
        assert rep.statistic == pytest.approx(rjsd_cov(CovariancePair.from_features(px, py)), abs=1e-10)
        rep_k = permutation_test(X, Y, KernelEmbedding(0.8), TstConfig(permutations=5))
        assert rep_k.statistic == pytest.approx(rjsd_kernel(X, Y, 0.8), abs=1e-10)

    def test_feature_routes_agree(self):
        # n < D uses the Gram block, n > D the covariance; same entropies
        rng = np.random.default_rng(2)
        X, Y = rng.standard_normal((8, 2)), rng.standard_normal((40, 2))
        a = permutation_test(X, Y, rff_embedding(2, 10), TstConfig(permutations=30), seed=3)
        emb = rff_embedding(2, 10)
        px, py = emb.represent(X), emb.represent(Y)
        assert a.statistic == pytest.approx(rjsd_cov(CovariancePair.from_features(px, py)), abs=1e-10)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        X, Y = rng.standard_normal((20, 2)), rng.standard_normal((20, 2))
        a = permutation_test(X, Y, rff_embedding(2), TstConfig(permutations=30), seed=5)
        b = permutation_test(X, Y, rff_embedding(2), TstConfig(permutations=30), seed=5)
        np.testing.assert_array_equal(a.null_samples, b.null_samples)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            permutation_test(np.zeros((3, 2)), np.zeros((3, 3)), rff_embedding(2), TstConfig())

    def test_type_one_calibration(self):
        emb = rff_embedding(2, 25, sigma=1.0, seed=4)
        cfg = TstConfig(permutations=100)
        rejections = 0
        for k in range(100):
            rng = np.random.default_rng(100 + k)
            rejections += permutation_test(
                rng.standard_normal((30, 2)), rng.standard_normal((30, 2)), emb, cfg, seed=k
            ).reject
        lo, hi = stats.binom.interval(0.95, 100, 0.05)
        assert lo <= rejections <= hi

    def test_disjoint_supports(self):
        emb = rff_embedding(2, 25, sigma=1.0, seed=5)
        cfg = TstConfig(permutations=100)
        rejections = 0
        for k in range(100):
            rng = np.random.default_rng(200 + k)
            X = rng.standard_normal((100, 2))
            Y = rng.standard_normal((100, 2)) + 10.0
            rejections += permutation_test(X, Y, emb, cfg, seed=k).reject
        assert rejections >= 99

    def test_rank_uniform_under_null(self):
        emb = rff_embedding(1, 8, seed=6)
        cfg = TstConfig(permutations=19)
        ranks = []
        for k in range(500):
            rng = np.random.default_rng(1000 + k)
            rep = permutation_test(rng.standard_normal((15, 1)), rng.standard_normal((15, 1)), emb, cfg, seed=k)
            ranks.append(int(np.sum(rep.null_samples < rep.statistic)))
        counts = np.bincount(ranks, minlength=20)
        assert stats.chisquare(counts).pvalue > 0.01

    def test_null_law_stable_under_repooling(self):
        rng = np.random.default_rng(7)
        X, Y = rng.standard_normal((40, 2)), rng.standard_normal((40, 2))
        emb = rff_embedding(2, 15, seed=8)
        a = permutation_test(X, Y, emb, TstConfig(permutations=100), seed=1).null_samples
        Z = np.vstack([X, Y])[rng.permutation(80)]
        b = permutation_test(Z[:40], Z[40:], emb, TstConfig(permutations=100), seed=2).null_samples
        assert stats.ks_2samp(a, b).statistic < 0.2


class TestTraining:
    def test_kernel_gradient(self):
        rng = np.random.default_rng(0)
        Z = np.vstack([rng.standard_normal((10, 2)), rng.standard_normal((8, 2)) * 2])
        D2 = np.square(Z[:, None] - Z[None]).sum(-1)
        _, g = _kernel_value_and_grad(D2, 10, 0.1)
        h = 1e-5
        num = (_kernel_value_and_grad(D2, 10, 0.1 + h)[0] - _kernel_value_and_grad(D2, 10, 0.1 - h)[0]) / (2 * h)
        assert g == pytest.approx(num, rel=1e-5)

    def test_kernel_value_matches_estimator(self):
        rng = np.random.default_rng(1)
        X, Y = rng.standard_normal((9, 2)), rng.standard_normal((7, 2))
        Z = np.vstack([X, Y])
        D2 = np.square(Z[:, None] - Z[None]).sum(-1)
        v, _ = _kernel_value_and_grad(D2, 9, np.log(0.7))
        assert v == pytest.approx(rjsd_kernel(X, Y, 0.7), abs=1e-10)

    @pytest.mark.parametrize("method", ["jsd-ff", "jsd-rff", "jsd-d", "jsd-k"])
    def test_each_method_trains(self, method):
        spec = DatasetSpec("blobs", 10)
        X, Y = draw_pair(spec, 0, 0, TRAIN_STREAM)
        emb = train_embedding(X, Y, TstConfig(method=method, epochs=5), "blobs")
        rep = permutation_test(X, Y, emb, TstConfig(permutations=10))
        assert np.isfinite(rep.statistic)

    def test_rff_keeps_frequencies(self):
        spec = DatasetSpec("hdgm", 40, d=3)
        X, Y = draw_pair(spec, 0, 0, TRAIN_STREAM)
        rff = train_embedding(X, Y, TstConfig(method="jsd-rff", epochs=5), "hdgm", seed=1)
        ff = train_embedding(X, Y, TstConfig(method="jsd-ff", epochs=5), "hdgm", seed=1)
        fresh = build_dffn(3, [], 15, sigma=1.0, seed=1)
        np.testing.assert_array_equal(rff.net.terminal.omega, fresh.terminal.omega)
        assert not np.array_equal(ff.net.terminal.omega, fresh.terminal.omega)

    def test_jsd_d_architecture(self):
        X, Y = draw_pair(DatasetSpec("hdgm", 30, d=4), 0, 0, TRAIN_STREAM)
        emb = train_embedding(X, Y, TstConfig(method="jsd-d", epochs=2), "hdgm")
        net = emb.net
        assert [l.weight.shape for l in net.layers] == [(4, 12), (12, 12), (12, 12), (12, 12)]
        assert [l.activation for l in net.layers] == ["softplus"] * 3 + ["identity"]
        assert net.terminal.omega.shape[1] == 15 and net.combined


class TestProtocol:
    def test_train_and_test_streams_differ(self):
        spec = DatasetSpec("blobs", 5)
        Xtr, _ = draw_pair(spec, 0, 0, TRAIN_STREAM)
        Xte, _ = draw_pair(spec, 0, 0, TEST_STREAM)
        assert not np.any(np.isin(Xtr, Xte))

    def test_split_disjoint(self):
        rows = np.arange(20.0).reshape(10, 2)
        a, b = train_test_split(rows, 0.5, seed=0)
        assert len(a) == len(b) == 5
        assert not set(a[:, 0]) & set(b[:, 0])

    def test_split_one_row(self):
        with pytest.raises(InsufficientData):
            train_test_split(np.zeros((1, 2)))

    def test_null_spec_draws_p_twice(self):
        X, Y = draw_pair(DatasetSpec("hdgm", 2000, d=3, null=True), 0, 0, TEST_STREAM)
        assert abs(np.cov(Y.T)[0, 1] - np.cov(X.T)[0, 1]) < 0.1

    def test_power_rows_and_summary(self):
        cfg = TstConfig(method="jsd-rff", n_test_sets=3, n_trials=2, permutations=10, epochs=2)
        rows = run_power_experiment(DatasetSpec("null-gauss", 10, d=2, null=True), cfg, grid=[10, 12])
        assert len(rows) == 4
        assert {r["n"] for r in rows} == {10, 12}
        assert set(rows[0]) == {"dataset", "method", "n", "d", "trial", "power"}
        summary = summarize(rows)
        assert len(summary) == 2
        assert set(summary[0]) == {"dataset", "method", "n", "d", "mean_power", "sd"}

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TstConfig(method="mmd")
        with pytest.raises(ValueError):
            TstConfig(permutations=0)
        with pytest.raises(ValueError):
            TstConfig(alpha_level=1.0)
