import numpy as np
import pytest

from smilecast.evaluation import (BacktestPlan, LossMatrix, mafe, mme, msfe,
                                  r_squared, run_backtest)
from smilecast.fpca import Fixed, fit_static_fpca
from smilecast.models import ModelSpec
from smilecast.panels import CurvePanel, PanelSet
from smilecast.synth import iid_panel, multilevel_set

from conftest import make_panel


RW_ONLY = (("RW", "RW"),)


class TestBacktestPlan:
    def test_requires_min_train_size(self):
        with pytest.raises(ValueError, match="at least 30"):
            BacktestPlan(initial_train_size=10, horizons=(1,),
                         models=RW_ONLY)

    def test_requires_horizons(self):
        with pytest.raises(ValueError, match="horizons"):
            BacktestPlan(initial_train_size=30, horizons=(), models=RW_ONLY)

    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValueError, match="unique"):
            BacktestPlan(initial_train_size=30, horizons=(1,),
                         models=(("RW", "RW"), ("RW", "RW")))


class TestRunBacktest:
    def test_paper_window_counts(self):
        panel = iid_panel(0, 2349)
        pset = PanelSet((panel,))
        plan = BacktestPlan(initial_train_size=1827, horizons=(1, 5, 10),
                            models=RW_ONLY)
        result = run_backtest(pset, plan)
        assert len(result.bundles[("RW", 1)]) == 522
        assert len(result.bundles[("RW", 5)]) == 518
        assert len(result.bundles[("RW", 10)]) == 513

    def test_small_window_count(self):
        # n - train - h + 1, consistent with the 522/518/513 counts above
        pset = PanelSet((iid_panel(1, 40),))
        plan = BacktestPlan(initial_train_size=30, horizons=(1,),
                            models=RW_ONLY)
        result = run_backtest(pset, plan)
        assert len(result.bundles[("RW", 1)]) == 10

    def test_deficit_error_lists_shortfall(self):
        pset = PanelSet((iid_panel(1, 40),))
        plan = BacktestPlan(initial_train_size=35, horizons=(10,),
                            models=RW_ONLY)
        with pytest.raises(ValueError, match="short by 5"):
            run_backtest(pset, plan)

    def test_rw_losses_match_standalone_oracle(self):
        panel = iid_panel(2, 50)
        pset = PanelSet((panel,))
        plan = BacktestPlan(initial_train_size=30, horizons=(1,),
                            models=RW_ONLY)
        result = run_backtest(pset, plan)
        loss = result.loss_matrix("mafe", panel.maturity_label, 1)
        vals = panel.values
        oracle = [np.mean(np.abs(vals[t] - vals[t - 1]))
                  for t in range(30, 50)]
        assert np.max(np.abs(loss.values[:, 0] - np.array(oracle))) < 1e-12

    def test_models_see_only_the_past(self):
        pset = PanelSet((multilevel_set(5, 52)[0].panels[0],))
        spec = ModelSpec(family="univariate", k_rule=Fixed(1))
        plan = BacktestPlan(initial_train_size=40, horizons=(1,),
                            models=(("FTS", spec), ("RW", "RW")))
        result = run_backtest(pset, plan)

        corrupt_at = 46
        panels = []
        for p in pset.panels:
            vals = p.values.copy()
            vals[corrupt_at:] = 99.0
            panels.append(CurvePanel(p.grid, p.dates, vals,
                                     p.maturity_label))
        corrupted = run_backtest(PanelSet(tuple(panels)), plan)
        checked = 0
        for mid in ("FTS", "RW"):
            for b_clean, b_bad in zip(result.bundles[(mid, 1)],
                                      corrupted.bundles[(mid, 1)]):
                if b_clean.origin_index <= corrupt_at:
                    checked += 1
                    for lab in pset.labels:
                        assert np.array_equal(b_clean.forecasts[lab],
                                              b_bad.forecasts[lab])
        assert checked > 0

    def test_refit_every_queries_longer_horizon(self):
        panel = iid_panel(3, 46)
        pset = PanelSet((panel,))
        plan = BacktestPlan(initial_train_size=40, horizons=(1,),
                            models=RW_ONLY, refit_every=3)
        result = run_backtest(pset, plan)
        # RW forecasts the last row of the fit window, refreshed on refits
        fits_at = [40, 40, 40, 43, 43, 43]
        for bundle, t_fit in zip(result.bundles[("RW", 1)], fits_at):
            assert np.array_equal(bundle.curve(), panel.values[t_fit - 1])


class TestLossMatrix:
    def test_shape_and_metric_validation(self):
        with pytest.raises(ValueError, match="metric"):
            LossMatrix("rmse", ("A",), np.ones((5, 1)))
        with pytest.raises(ValueError, match="origins x models"):
            LossMatrix("mafe", ("A", "B"), np.ones((5, 3)))
        with pytest.raises(ValueError, match="finite"):
            LossMatrix("mafe", ("A",), -np.ones((5, 1)))


class TestPointMetrics:
    def test_perfect_forecast(self):
        c = np.array([1.0, 2.0, 3.0])
        assert mafe(c, c) == 0.0
        assert msfe(c, c) == 0.0

    def test_arithmetic_example(self):
        actual = np.zeros(5)
        forecast = -np.array([1.0, -1.0, 2.0, 0.0, 3.0])
        assert mafe(actual, forecast) == pytest.approx(1.4)
        assert msfe(actual, forecast) == pytest.approx(3.0)

    def test_msfe_dominates_squared_mafe(self, rng):
        a = rng.standard_normal(5)
        f = rng.standard_normal(5)
        assert msfe(a, f) >= mafe(a, f) ** 2 - 1e-15

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            mafe(np.ones(4), np.ones(5))

    def test_aggregate_decomposability(self, rng):
        actual = rng.standard_normal((40, 5))
        forecast = actual + rng.standard_normal((40, 5))
        per_origin = [mafe(actual[i], forecast[i]) for i in range(40)]
        assert np.mean(np.abs(actual - forecast)) == pytest.approx(
            np.mean(per_origin), abs=1e-12)


class TestMme:
    def test_exact_forecasts_zero(self):
        a = np.ones((3, 5))
        assert mme(a, a, "U") == 0.0
        assert mme(a, a, "O") == 0.0

    def test_single_under_prediction(self):
        actual = np.array([[1.0]])
        forecast = np.array([[0.75]])
        assert mme(actual, forecast, "U") == pytest.approx(0.5)
        assert mme(actual, forecast, "O") == pytest.approx(0.25)

    def test_symmetric_errors_equalise_flavors(self):
        actual = np.array([[1.0, 1.0]])
        forecast = np.array([[1.3, 0.7]])
        assert mme(actual, forecast, "U") == pytest.approx(
            mme(actual, forecast, "O"))

    def test_flavor_sum_identity(self, rng):
        actual = np.abs(rng.standard_normal((20, 5))) + 1.0
        forecast = actual + 0.5 * rng.standard_normal((20, 5))
        err = np.abs(actual - forecast)
        mask = forecast != actual
        direct = (err[mask].sum() + np.sqrt(err[mask]).sum()) / actual.size
        total = mme(actual, forecast, "U") + mme(actual, forecast, "O")
        assert total == pytest.approx(direct, rel=1e-13)

    def test_unknown_flavor(self):
        with pytest.raises(ValueError, match="flavor"):
            mme(np.ones((2, 2)), np.ones((2, 2)), "X")


class TestRSquared:
    def test_perfect_fit(self):
        panel = iid_panel(0, 30)
        curve, total = r_squared(panel, panel.values)
        assert np.allclose(curve, 1.0)
        assert total == pytest.approx(1.0)

    def test_mean_fit_is_zero(self):
        panel = iid_panel(1, 30)
        fitted = np.tile(panel.values.mean(axis=0), (panel.n, 1))
        curve, total = r_squared(panel, fitted)
        assert np.allclose(curve, 0.0, atol=1e-12)
        assert total == pytest.approx(0.0, abs=1e-12)

    def test_full_rank_reconstruction(self):
        panel = iid_panel(2, 60)
        basis = fit_static_fpca(panel, Fixed(5))
        _, total = r_squared(panel, basis.reconstruct())
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_zero_variance_errors(self):
        vals = np.random.default_rng(0).uniform(9, 11, size=(20, 5))
        vals[:, 2] = 10.0
        panel = make_panel(vals)
        with pytest.raises(ValueError, match="no variance at grid point"):
            r_squared(panel, vals * 0 + 10.0)
