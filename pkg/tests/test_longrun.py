import numpy as np
import pytest

from smilecast.fpca import CPV, Fixed, fit_static_fpca, sample_covariance
from smilecast.longrun import (BandwidthSpec, KernelWeights,
                               autocovariance_lag, fit_dynamic_fpca,
                               long_run_covariance, longrun_matrix,
                               plugin_bandwidth)
from smilecast.panels import inner_product
from smilecast.synth import (default_grid, iid_panel, orthonormal_curves,
                             score_series)

from conftest import make_panel


def ar1_factor_panel(seed, n, phi_coef=0.9, noise=0.1):
    rng = np.random.default_rng(seed)
    grid = default_grid()
    loading = orthonormal_curves(grid, 1)[0]
    beta = score_series(rng, n, "ar1", phi_coef, 1.0)
    values = 10.0 + np.outer(beta, loading)
    if noise:
        values = values + noise * rng.standard_normal((n, grid.size))
    return make_panel(values), loading


class TestKernelWeights:
    def test_properties(self):
        for kw in (KernelWeights("bartlett", 1, 1.0),
                   KernelWeights("flat_top", 2, 1.0)):
            assert kw(0.0) == 1.0
            u = np.linspace(-2, 2, 41)
            assert np.allclose(kw(u), kw(-u))
            assert np.all(kw(u[np.abs(u) > kw.support_m]) == 0.0)

    def test_flat_top_plateau(self):
        kw = KernelWeights("flat_top", 2, 1.0)
        assert kw(0.49) == 1.0
        assert kw(0.5) == 1.0
        assert 0.0 < kw(0.75) < 1.0

    def test_squared_l2_norm(self):
        u = np.linspace(-1.5, 1.5, 3_000_001)
        for kw in (KernelWeights("bartlett", 1, 1.0),
                   KernelWeights("flat_top", 2, 1.0)):
            numeric = np.trapezoid(np.asarray(kw(u)) ** 2, u)
            assert kw.squared_l2_norm == pytest.approx(numeric, abs=1e-5)

    def test_rejects_unknown_family(self):
        with pytest.raises(ValueError, match="family"):
            KernelWeights("parzen")


class TestAutocovariance:
    def test_lag0_equals_sample_covariance(self, rng):
        panel = make_panel(10.0 + rng.standard_normal((60, 5)))
        assert np.array_equal(autocovariance_lag(panel, 0),
                              sample_covariance(panel))

    def test_transpose_identity(self, rng):
        panel = make_panel(10.0 + rng.standard_normal((60, 5)))
        for lag in (1, 3, 7):
            g = autocovariance_lag(panel, lag)
            gm = autocovariance_lag(panel, -lag)
            assert np.max(np.abs(gm - g.T)) < 1e-12

    def test_iid_lag5_small(self):
        panel = iid_panel(0, 400, scale=1.0)
        g5 = autocovariance_lag(panel, 5)
        # entries are O(1/sqrt(n)); three standard errors
        assert np.max(np.abs(g5)) < 3.0 / np.sqrt(400)

    def test_lag_out_of_range(self):
        panel = iid_panel(0, 10)
        with pytest.raises(ValueError, match="must be < n"):
            autocovariance_lag(panel, 10)


class TestLongRunCovariance:
    def test_reduces_to_lag0_when_weights_vanish(self, rng):
        panel = make_panel(10.0 + rng.standard_normal((80, 5)))
        kw = KernelWeights("flat_top", 2, 1.0)
        out = long_run_covariance(panel, kw, BandwidthSpec("fixed", 0.5))
        assert np.array_equal(out, sample_covariance(panel))

    def test_matches_direct_weighted_sum(self):
        panel = iid_panel(5, 300)
        kw = KernelWeights("bartlett", 1, 1.0)
        h = 3.0
        out = long_run_covariance(panel, kw, BandwidthSpec("fixed", h))
        oracle = autocovariance_lag(panel, 0)
        for lag in range(1, int(np.ceil(kw.support_m * h)) + 1):
            w_l = float(kw(lag / h))
            g = autocovariance_lag(panel, lag)
            oracle = oracle + w_l * (g + g.T)
        assert np.max(np.abs(out - oracle)) < 1e-12
        # iid data: long-run close to the lag-0 surface
        assert np.max(np.abs(out - sample_covariance(panel))) < 0.5

    def test_ma1_matches_analytic_along_loading(self):
        theta, n = 0.5, 2000
        rng = np.random.default_rng(77)
        grid = default_grid()
        loading = orthonormal_curves(grid, 1)[0]
        beta = score_series(rng, n, "ma1", theta, 1.0)
        panel = make_panel(10.0 + np.outer(beta, loading))
        kw = KernelWeights("flat_top", 2, 1.0)
        cov = long_run_covariance(panel, kw, BandwidthSpec("plugin"))
        w = grid.quadrature_weights
        lr = float(loading @ (w[:, None] * w[None, :] * cov) @ loading)
        assert lr == pytest.approx((1 + theta) ** 2, rel=0.1)

    def test_symmetric_output(self):
        panel, _ = ar1_factor_panel(3, 300)
        kw = KernelWeights("flat_top", 2, 1.0)
        out = long_run_covariance(panel, kw, BandwidthSpec("fixed", 4.0))
        assert np.max(np.abs(out - out.T)) < 1e-12

    def test_monotone_truncation_bit_identical(self):
        panel, _ = ar1_factor_panel(4, 200)
        kw = KernelWeights("flat_top", 2, 1.0)
        quad_w = panel.grid.quadrature_weights
        base = longrun_matrix(panel.values, quad_w, kw, 3.0)
        widened = longrun_matrix(panel.values, quad_w, kw, 3.0, max_lag=20)
        assert np.array_equal(base, widened)


class TestPluginBandwidth:
    def test_iid_keeps_at_most_two_lags(self):
        kw = KernelWeights("flat_top", 2, 1.0)
        for seed in range(5):
            panel = iid_panel(seed, 200)
            h = plugin_bandwidth(panel, kw)
            assert np.ceil(kw.support_m * h) <= 2

    def test_persistent_larger_than_iid(self):
        kw = KernelWeights("flat_top", 2, 1.0)
        for seed in range(5):
            iid_h = plugin_bandwidth(iid_panel(seed, 200), kw)
            ar_panel, _ = ar1_factor_panel(seed, 200)
            ar_h = plugin_bandwidth(ar_panel, kw)
            assert ar_h > iid_h

    def test_small_sample_errors(self):
        with pytest.raises(ValueError, match="insufficient sample"):
            plugin_bandwidth(iid_panel(0, 5), KernelWeights())

    def test_frozen_regression_value(self):
        # pins the documented plug-in recipe; update only deliberately
        panel, _ = ar1_factor_panel(123, 400)
        h = plugin_bandwidth(panel, KernelWeights("flat_top", 2, 1.0))
        assert h == pytest.approx(8.0, rel=1e-12)  # plateau floor binds

    def test_iid_bandwidth_is_zero(self):
        # white noise keeps no pilot lags, collapsing h (and the floor)
        h = plugin_bandwidth(iid_panel(3, 200), KernelWeights())
        assert h == 0.0


class TestDynamicFpca:
    def test_reduces_to_static_bitwise(self, rng):
        panel = make_panel(10.0 + rng.standard_normal((90, 5)))
        kw = KernelWeights("flat_top", 2, 1.0)
        stat = fit_static_fpca(panel, CPV(0.99))
        dyn = fit_dynamic_fpca(panel, kw, BandwidthSpec("fixed", 0.0),
                               CPV(0.99))
        assert dyn.kind == "dynamic"
        assert np.array_equal(stat.eigenvalues, dyn.eigenvalues)
        assert np.array_equal(stat.eigenfunctions, dyn.eigenfunctions)
        assert np.array_equal(stat.scores, dyn.scores)

    def test_dependent_panel_differs_from_static(self):
        panel, _ = ar1_factor_panel(9, 400, noise=1.0)
        kw = KernelWeights("flat_top", 2, 1.0)
        bw = BandwidthSpec("fixed", 4.0)
        dyn = fit_dynamic_fpca(panel, kw, bw, Fixed(2))
        stat = fit_static_fpca(panel, Fixed(2))
        # recompute via the covariance route as an oracle
        cov = long_run_covariance(panel, kw, bw)
        from smilecast.fpca import basis_from_covariance
        oracle = basis_from_covariance(panel.values,
                                       panel.grid.quadrature_weights,
                                       cov, Fixed(2), "dynamic")
        assert np.array_equal(dyn.eigenfunctions, oracle.eigenfunctions)
        cosine = abs(inner_product(dyn.eigenfunctions[0],
                                   stat.eigenfunctions[0], panel.grid))
        assert cosine < 1.0 - 1e-6  # angle strictly positive

    def test_rank1_persistent_selects_one_component(self):
        panel, _ = ar1_factor_panel(10, 500, noise=0.0)
        kw = KernelWeights("flat_top", 2, 1.0)
        basis = fit_dynamic_fpca(panel, kw, BandwidthSpec("plugin"),
                                 CPV(0.99))
        assert basis.n_components == 1

    def test_zero_autocorr_eigenvalues_close_to_static(self):
        panel = iid_panel(21, 2000)
        kw = KernelWeights("flat_top", 2, 1.0)
        dyn = fit_dynamic_fpca(panel, kw, BandwidthSpec("plugin"), Fixed(5))
        stat = fit_static_fpca(panel, Fixed(5))
        rel = np.abs(dyn.eigenvalues - stat.eigenvalues) / stat.eigenvalues
        assert np.max(rel) < 0.05
