import math

import numpy as np
import pytest
from scipy import integrate, stats

from smilecast.models import ForecastBundle
from smilecast.panels import PanelSet
from smilecast.synth import iid_panel, market_series
from smilecast.trading import (MarketInputs, MarketSeries, TradeLedger,
                               TradingConfig, gk_price, performance_stats,
                               straddle_strategy)

from conftest import make_panel


def lognormal_call_oracle(spot, r_d, r_f, tau, sigma, strike):
    """Discounted lognormal payoff integral, independent of the formula."""
    fwd = spot * math.exp((r_d - r_f) * tau)
    sd = sigma * math.sqrt(tau)

    def payoff(z):
        s_t = fwd * math.exp(-0.5 * sd * sd + sd * z)
        return max(s_t - strike, 0.0) * stats.norm.pdf(z)

    val, _ = integrate.quad(payoff, -12, 12, limit=200)
    return math.exp(-r_d * tau) * val


class TestGkPrice:
    def test_atm_zero_rates_matches_quadrature(self):
        inputs = MarketInputs(100.0, 0.0, 0.0, 1.0, 0.2)
        call = gk_price(inputs, 100.0, "call")
        put = gk_price(inputs, 100.0, "put")
        closed = 100.0 * (2.0 * stats.norm.cdf(0.1) - 1.0)
        assert call == pytest.approx(closed, abs=1e-10)
        assert call == pytest.approx(put, abs=1e-10)
        oracle = lognormal_call_oracle(100.0, 0.0, 0.0, 1.0, 0.2, 100.0)
        assert call == pytest.approx(oracle, abs=1e-6)

    def test_vanishing_vol_gives_intrinsic(self):
        inputs = MarketInputs(100.0, 0.0, 0.0, 1.0, 1e-14)
        assert gk_price(inputs, 100.0, "call") == 0.0
        assert gk_price(inputs, 80.0, "call") == pytest.approx(20.0)
        assert gk_price(inputs, 120.0, "put") == pytest.approx(20.0)

    def test_put_call_parity_random_inputs(self, rng):
        for _ in range(200):
            s = rng.uniform(0.5, 2.0)
            k = s * rng.uniform(0.7, 1.3)
            inputs = MarketInputs(s, rng.uniform(-0.02, 0.08),
                                  rng.uniform(-0.02, 0.08),
                                  rng.uniform(0.05, 3.0),
                                  rng.uniform(0.05, 0.8))
            call = gk_price(inputs, k, "call")
            put = gk_price(inputs, k, "put")
            fwd_gap = (s * math.exp(-inputs.foreign_rate * inputs.tau)
                       - k * math.exp(-inputs.domestic_rate * inputs.tau))
            assert call - put == pytest.approx(fwd_gap, abs=1e-12)

    def test_vega_positive(self, rng):
        for _ in range(200):
            s = rng.uniform(0.5, 2.0)
            k = s * rng.uniform(0.8, 1.2)
            r_d, r_f = rng.uniform(-0.02, 0.06, size=2)
            tau = rng.uniform(0.05, 2.0)
            sigma = rng.uniform(0.05, 0.6)
            lo = gk_price(MarketInputs(s, r_d, r_f, tau, sigma), k, "call")
            hi = gk_price(MarketInputs(s, r_d, r_f, tau, sigma + 0.01),
                          k, "call")
            assert hi > lo

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError, match="positive"):
            MarketInputs(-1.0, 0.0, 0.0, 1.0, 0.2)
        with pytest.raises(ValueError, match="kind"):
            gk_price(MarketInputs(1.0, 0.0, 0.0, 1.0, 0.2), 1.0, "digital")


def one_step_bundles(panel_set, forecast_fn, model_id="sig"):
    """Bundles for origins 1..n-1 with per-maturity forecast_fn(panel, t)."""
    bundles = []
    for t in range(1, panel_set.n):
        fc = {p.maturity_label: forecast_fn(p, t)
              for p in panel_set.panels}
        bundles.append(ForecastBundle(model_id, t, 1, fc, {}))
    return bundles


@pytest.fixture
def strategy_setup():
    panel = iid_panel(31, 60, scale=0.5)
    pset = PanelSet((panel,))
    market = market_series(7, panel.dates)
    cfg = TradingConfig(maturity_years={"1M": 1.0 / 12.0})
    return pset, market, cfg


class TestStraddleStrategy:
    def test_flat_when_forecast_equals_today(self, strategy_setup):
        pset, market, cfg = strategy_setup
        bundles = one_step_bundles(pset, lambda p, t: p.values[t - 1].copy())
        ledgers = straddle_strategy(bundles, pset, market, cfg)
        assert ledgers["1M"].n_traded == 0
        assert np.all(ledgers["1M"].returns == 0.0)
        assert np.all(ledgers["portfolio"].returns == 0.0)

    def test_long_gains_when_iv_rises_all_else_frozen(self):
        # frozen market, long maturity: theta decay is negligible next
        # to a two-point IV jump, so the long straddle must profit
        n = 40
        vals = np.full((n, 5), 10.0)
        vals[1::2] += 2.0
        panel = make_panel(vals, label="2Y")
        pset = PanelSet((panel,))
        market = MarketSeries(panel.dates, np.full(n, 1.1), np.zeros(n),
                              np.zeros(n))
        cfg = TradingConfig(maturity_years={"2Y": 2.0})
        bundles = one_step_bundles(pset, lambda p, t: p.values[t].copy())
        ledgers = straddle_strategy(bundles, pset, market, cfg)
        led = ledgers["2Y"]
        rising = led.signals == 1
        assert rising.any()
        assert np.all(led.returns[rising] > 0)
        # repricing oracle for the first rising day
        t = 1 + int(np.argmax(led.signals == 1))
        strike = 1.1  # zero rates: forward equals spot
        entry = 2 * gk_price(MarketInputs(1.1, 0.0, 0.0, 2.0,
                                          vals[t - 1, 2] / 100.0),
                             strike, "call")
        exit_ = 2 * gk_price(MarketInputs(1.1, 0.0, 0.0, 2.0 - 1.0 / 252.0,
                                          vals[t, 2] / 100.0),
                             strike, "call")
        idx = t - 1
        assert led.returns[idx] == pytest.approx((exit_ - entry) / entry,
                                                 abs=1e-12)

    def test_signal_flip_negates_returns_exactly(self, strategy_setup):
        pset, market, cfg = strategy_setup
        panel = pset.panels[0]
        up = one_step_bundles(pset, lambda p, t: p.values[t - 1] + 1.0)
        down = one_step_bundles(pset, lambda p, t: p.values[t - 1] - 1.0)
        long_led = straddle_strategy(up, pset, market, cfg)
        short_led = straddle_strategy(down, pset, market, cfg)
        for key in ("1M", "portfolio"):
            assert np.array_equal(long_led[key].returns,
                                  -short_led[key].returns)

    def test_perfect_foresight_beats_inverted(self, strategy_setup):
        pset, market, cfg = strategy_setup
        oracle = one_step_bundles(pset, lambda p, t: p.values[t].copy())
        mirror = one_step_bundles(
            pset, lambda p, t: 2.0 * p.values[t - 1] - p.values[t])
        good = straddle_strategy(oracle, pset, market, cfg)
        bad = straddle_strategy(mirror, pset, market, cfg)
        assert good["1M"].returns.mean() >= bad["1M"].returns.mean()

    def test_misaligned_market_errors(self, strategy_setup):
        pset, market, cfg = strategy_setup
        shifted = MarketSeries(np.array([d + "x" for d in market.dates]),
                               market.spot, market.domestic_rate,
                               market.foreign_rate)
        bundles = one_step_bundles(pset, lambda p, t: p.values[t - 1] + 1.0)
        with pytest.raises(ValueError, match="misaligned"):
            straddle_strategy(bundles, pset, shifted, cfg)

    def test_zero_premium_goes_flat_with_warning(self):
        n = 40
        vals = np.full((n, 5), 1e-13)  # positive but numerically zero vol
        panel = make_panel(vals, label="1M")
        pset = PanelSet((panel,))
        market = MarketSeries(panel.dates, np.full(n, 1.1), np.zeros(n),
                              np.zeros(n))
        cfg = TradingConfig(maturity_years={"1M": 1.0 / 12.0})
        bundles = one_step_bundles(pset, lambda p, t: p.values[t - 1] + 1.0)
        with pytest.warns(RuntimeWarning, match="zero entry premium"):
            ledgers = straddle_strategy(bundles, pset, market, cfg)
        assert ledgers["1M"].n_traded == 0


class TestTradeLedger:
    def test_flat_days_must_have_zero_return(self):
        with pytest.raises(ValueError, match="flat"):
            TradeLedger("1M", np.array(["d1"]), np.array([0]),
                        np.array([1.0]), np.array([1.0]), np.array([0.5]))


class TestPerformanceStats:
    def _ledger(self, returns):
        n = len(returns)
        return TradeLedger("1M", np.array([f"d{i}" for i in range(n)]),
                           np.ones(n, dtype=int), np.ones(n), np.ones(n),
                           np.asarray(returns, dtype=float))

    def test_all_zero_returns_error(self):
        led = TradeLedger("1M", np.array(["d0", "d1"]), np.zeros(2, int),
                          np.ones(2), np.ones(2), np.zeros(2))
        with pytest.raises(ValueError, match="traded"):
            performance_stats(led)

    def test_degenerate_constant_returns(self):
        with pytest.raises(ValueError, match="degenerate"):
            performance_stats(self._ledger([0.01] * 10))

    def test_alternating_returns(self):
        stats_out = performance_stats(self._ledger([0.01, -0.01] * 10))
        assert stats_out["mean"] == pytest.approx(0.0, abs=1e-18)
        assert stats_out["t_stat"] == pytest.approx(0.0, abs=1e-14)
        assert stats_out["sharpe"] == pytest.approx(0.0, abs=1e-14)

    def test_matches_direct_formula_oracle(self, rng):
        r = 0.01 * rng.standard_normal(250) + 0.001
        out = performance_stats(self._ledger(r))
        n = len(r)
        mean = r.mean()
        sd = r.std(ddof=1)
        t = mean / (sd / math.sqrt(n))
        assert out["mean"] == pytest.approx(mean, abs=1e-10)
        assert out["t_stat"] == pytest.approx(t, abs=1e-10)
        assert out["one_sided_p"] == pytest.approx(
            float(stats.t.sf(t, df=n - 1)), abs=1e-10)
        assert out["sharpe"] == pytest.approx(mean / sd, abs=1e-10)
        downside = math.sqrt(np.mean(np.minimum(r, 0.0) ** 2))
        assert out["sortino"] == pytest.approx(mean / downside, abs=1e-10)

    def test_trimmed_matches_sort_and_slice(self, rng):
        r = 0.01 * rng.standard_normal(200)
        out = performance_stats(self._ledger(r), trim=0.05)
        sliced = np.sort(r)[5:-5]
        assert out["n"] == 190
        assert out["mean"] == pytest.approx(sliced.mean(), abs=1e-12)

    def test_sortino_dominates_sharpe_for_positive_mean(self, rng):
        r = 0.01 * rng.standard_normal(300) + 0.004
        out = performance_stats(self._ledger(r))
        assert out["mean"] > 0
        assert out["sortino"] >= out["sharpe"]

    def test_trim_bounds(self):
        with pytest.raises(ValueError, match="trim"):
            performance_stats(self._ledger([0.01, -0.02, 0.03]), trim=0.6)
