"""Garman-Kohlhagen pricing, the ATM straddle strategy, and summary stats.

The strategy reads one-day-ahead forecasts of the at-the-money smile
point: a forecast above today's level goes long the delta-neutral
straddle, below goes short.  Positions are priced at entry with
today's ATM volatility and unwound one day later by repricing the same
contract, with one trading day less to expiry, at the realised ATM
volatility.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .panels import PanelSet

__all__ = [
    "MarketInputs",
    "MarketSeries",
    "TradingConfig",
    "TradeLedger",
    "gk_price",
    "straddle_strategy",
    "performance_stats",
]

TRADING_DAYS_PER_YEAR = 252
MIN_VOL_TIME = 1e-12


@dataclass(frozen=True)
class MarketInputs:
    """Spot, rates, time to expiry and volatility for one pricing call.

    Rates are continuously compounded per annum; ``sigma`` is the
    annualised volatility as a decimal; ``tau`` is in years.
    """

    spot: float
    domestic_rate: float
    foreign_rate: float
    tau: float
    sigma: float

    def __post_init__(self):
        if self.spot <= 0 or self.tau <= 0 or self.sigma <= 0:
            raise ValueError("spot, tau and sigma must be positive")


@dataclass(frozen=True)
class MarketSeries:
    """Daily spot and interest-rate series aligned with the IV panels."""

    dates: np.ndarray
    spot: np.ndarray
    domestic_rate: np.ndarray
    foreign_rate: np.ndarray

    def __post_init__(self):
        dates = np.array(self.dates, copy=True)
        cols = []
        for name in ("spot", "domestic_rate", "foreign_rate"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            if arr.shape != dates.shape:
                raise ValueError(f"{name} length does not match dates")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            cols.append(arr)
        if np.any(cols[0] <= 0):
            raise ValueError("spot must be positive")
        for arr in (dates, *cols):
            arr.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "spot", cols[0])
        object.__setattr__(self, "domestic_rate", cols[1])
        object.__setattr__(self, "foreign_rate", cols[2])


@dataclass(frozen=True)
class TradingConfig:
    """Strategy knobs: maturities in years, ATM point, optional spread."""

    maturity_years: dict = field(default_factory=lambda: {"1M": 1.0 / 12.0,
                                                          "6M": 0.5,
                                                          "2Y": 2.0})
    atm_delta: float = 50.0
    spread: float = 0.0  # proportional round-trip cost on the premium

    def __post_init__(self):
        if self.spread < 0:
            raise ValueError("spread must be nonnegative")
        for label, tau in self.maturity_years.items():
            if tau <= 0:
                raise ValueError(f"maturity {label!r} must have tau > 0")


@dataclass(frozen=True)
class TradeLedger:
    """Daily records of one traded bucket (a maturity or the portfolio).

    ``signals`` are +1 (long straddle), -1 (short) or 0 (flat); flat
    days carry a zero return.  For the portfolio bucket the signal is
    a participation flag: 0 when every leg was flat that day.
    """

    label: str
    dates: np.ndarray
    signals: np.ndarray
    entry_prices: np.ndarray
    exit_prices: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        sig = np.array(self.signals, dtype=int, copy=True)
        ret = np.array(self.returns, dtype=float, copy=True)
        if not np.all(np.isfinite(ret)):
            raise ValueError("returns must be finite")
        if np.any(ret[sig == 0] != 0.0):
            raise ValueError("flat days must have zero return")
        sig.setflags(write=False)
        ret.setflags(write=False)
        object.__setattr__(self, "signals", sig)
        object.__setattr__(self, "returns", ret)

    @property
    def n_traded(self) -> int:
        return int(np.sum(self.signals != 0))


def gk_price(inputs: MarketInputs, strike: float, kind: str) -> float:
    """European FX option price with domestic and foreign carry.

    When the total volatility sigma * sqrt(tau) is numerically zero the
    discounted intrinsic value (the diffusion-free limit) is returned.
    """
    if kind not in ("call", "put"):
        raise ValueError("kind must be 'call' or 'put'")
    if strike <= 0:
        raise ValueError("strike must be positive")
    s, k, tau = inputs.spot, strike, inputs.tau
    df_d = math.exp(-inputs.domestic_rate * tau)
    df_f = math.exp(-inputs.foreign_rate * tau)
    vol_time = inputs.sigma * math.sqrt(tau)
    if vol_time < MIN_VOL_TIME:
        fwd_gap = s * df_f - k * df_d
        return max(fwd_gap, 0.0) if kind == "call" else max(-fwd_gap, 0.0)
    d1 = (math.log(s / k)
          + (inputs.domestic_rate - inputs.foreign_rate
             + 0.5 * inputs.sigma ** 2) * tau) / vol_time
    d2 = d1 - vol_time
    if kind == "call":
        price = s * df_f * ndtr(d1) - k * df_d * ndtr(d2)
    else:
        price = k * df_d * ndtr(-d2) - s * df_f * ndtr(-d1)
    return max(float(price), 0.0)


def _straddle_price(spot, r_d, r_f, tau, sigma, strike) -> float:
    inp = MarketInputs(spot, r_d, r_f, tau, sigma)
    return gk_price(inp, strike, "call") + gk_price(inp, strike, "put")


def straddle_strategy(bundles, actual: PanelSet, market: MarketSeries,
                      cfg: TradingConfig) -> dict:
    """Run the signal-driven straddle book over a one-day-ahead stream.

    ``bundles`` are one-step-ahead forecast bundles ordered by origin,
    e.g. one model's stream out of the backtest harness.  Returns one
    ledger per maturity plus an equal-weight ``"portfolio"`` ledger.
    """
    if not np.array_equal(market.dates, actual.panels[0].dates):
        raise ValueError("market series dates are misaligned with the panels")
    bundles = sorted(bundles, key=lambda b: b.origin_index)
    if not bundles:
        raise ValueError("no forecast bundles supplied")
    if any(b.horizon != 1 for b in bundles):
        raise ValueError("the strategy trades the one-day-ahead horizon only")
    grid = actual.grid
    atm_candidates = np.nonzero(grid.points == cfg.atm_delta)[0]
    if len(atm_candidates) == 0:
        raise ValueError(f"grid has no {cfg.atm_delta} delta point")
    atm = int(atm_candidates[0])

    labels = [lab for lab in actual.labels if lab in cfg.maturity_years]
    if not labels:
        raise ValueError("no maturities with configured tenor")
    panel_by_label = {p.maturity_label: p for p in actual.panels}

    per_label = {lab: {"dates": [], "sig": [], "entry": [], "exit": [],
                       "ret": []} for lab in labels}
    zero_premium_days = 0
    for bundle in bundles:
        t = bundle.origin_index
        if not 1 <= t < actual.n:
            raise ValueError("forecast origin outside the actual sample")
        for lab in labels:
            panel = panel_by_label[lab]
            iv_today = panel.values[t - 1, atm] / 100.0
            iv_next = panel.values[t, atm] / 100.0
            fc_iv = bundle.forecasts[lab][atm] / 100.0
            sig = int(np.sign(fc_iv - iv_today))
            tau = cfg.maturity_years[lab]
            strike = market.spot[t - 1] * math.exp(
                (market.domestic_rate[t - 1] - market.foreign_rate[t - 1])
                * tau)
            entry = _straddle_price(market.spot[t - 1],
                                    market.domestic_rate[t - 1],
                                    market.foreign_rate[t - 1],
                                    tau, iv_today, strike)
            exit_ = _straddle_price(market.spot[t],
                                    market.domestic_rate[t],
                                    market.foreign_rate[t],
                                    tau - 1.0 / TRADING_DAYS_PER_YEAR,
                                    iv_next, strike)
            if sig != 0 and entry <= MIN_VOL_TIME:
                zero_premium_days += 1
                sig = 0
            ret = 0.0
            if sig != 0:
                ret = sig * (exit_ - entry) / entry - cfg.spread
            rec = per_label[lab]
            rec["dates"].append(panel.dates[t])
            rec["sig"].append(sig)
            rec["entry"].append(entry)
            rec["exit"].append(exit_)
            rec["ret"].append(ret)
    if zero_premium_days:
        warnings.warn(f"{zero_premium_days} day(s) skipped on zero entry "
                      "premium", RuntimeWarning, stacklevel=2)

    ledgers = {}
    for lab in labels:
        rec = per_label[lab]
        ledgers[lab] = TradeLedger(lab, np.array(rec["dates"]),
                                   np.array(rec["sig"]),
                                   np.array(rec["entry"]),
                                   np.array(rec["exit"]),
                                   np.array(rec["ret"]))
    sig_any = np.column_stack([ledgers[lab].signals for lab in labels])
    rets = np.column_stack([ledgers[lab].returns for lab in labels])
    port_sig = (np.abs(sig_any).sum(axis=1) > 0).astype(int)
    ledgers["portfolio"] = TradeLedger(
        "portfolio", ledgers[labels[0]].dates, port_sig,
        np.full(len(port_sig), np.nan), np.full(len(port_sig), np.nan),
        rets.mean(axis=1))
    return ledgers


def performance_stats(ledger: TradeLedger, trim: float = 0.0) -> dict:
    """Mean daily return, one-sided t-test, Sharpe and Sortino ratios.

    ``trim`` removes that fraction of the returns, split equally
    between the two tails, before computing every statistic.  The
    t-test is against a zero mean with the alternative that the mean
    is positive; Sharpe is mean over standard deviation without a
    risk-free adjustment; Sortino uses the root mean square of the
    negative returns (zero target).
    """
    if not 0.0 <= trim < 0.5:
        raise ValueError("trim must lie in [0, 0.5)")
    if ledger.n_traded < 2:
        raise ValueError("need at least 2 traded days")
    returns = np.sort(ledger.returns)
    drop = int(math.floor(len(returns) * trim / 2.0))
    if drop:
        returns = returns[drop:-drop]
    n = len(returns)
    mean = float(np.mean(returns))
    sd = float(np.std(returns, ddof=1))
    if sd <= 1e-15 + 1e-12 * abs(mean):
        raise ValueError("degenerate returns")
    t_stat = mean / (sd / math.sqrt(n))
    p_one_sided = float(stats.t.sf(t_stat, df=n - 1))
    downside = float(np.sqrt(np.mean(np.minimum(returns, 0.0) ** 2)))
    sortino = mean / downside if downside > 0 else math.inf
    return {
        "n": n,
        "mean": mean,
        "t_stat": float(t_stat),
        "one_sided_p": p_one_sided,
        "sharpe": mean / sd,
        "sortino": float(sortino),
    }
