"""Univariate time-series forecasting of principal component scores.

Order selection follows the familiar stepwise information-criterion
search: the differencing order is chosen by repeated KPSS-type level
tests, then (p, q) by a hill-climbing AICc search started from the
(2, 2) neighbourhood.  Parameter estimation is delegated to
statsmodels' ARIMA (state-space maximum likelihood); point forecasts
are produced by the standard ARIMA recursion from the fitted
coefficients.  Exactly deterministic series (zero-noise recursions,
constants, linear trends) are detected and fitted by least squares
directly, where gradient-based likelihood maximisation is degenerate.

The random walk and per-point AR(1) curve benchmarks live here too.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .panels import CurvePanel

__all__ = [
    "ScoreSeries",
    "ArimaFit",
    "fit_auto_arima",
    "forecast_scores",
    "rw_curve_forecast",
    "ar1_curve_forecast",
]

MAX_P = 5
MAX_Q = 5
MAX_D = 2
KPSS_CRIT_5PCT = 0.463  # level-stationarity critical value
EXACT_FIT_REL_TOL = 1e-12


@dataclass(frozen=True)
class ScoreSeries:
    """A component-score (or any scalar) series with a label."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 1:
            raise ValueError("score series must be 1-d")
        if not np.all(np.isfinite(vals)):
            raise ValueError("score series contains non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def _series_values(series) -> np.ndarray:
    if isinstance(series, ScoreSeries):
        return series.values
    vals = np.asarray(series, dtype=float)
    if vals.ndim != 1 or not np.all(np.isfinite(vals)):
        raise ValueError("score series must be a finite 1-d vector")
    return vals


def _poly_roots_outside(coeffs: np.ndarray, sign: float) -> bool:
    """Check 1 + sign * sum_i c_i z^i has all roots outside the circle."""
    if len(coeffs) == 0:
        return True
    poly = np.concatenate(([1.0], sign * np.asarray(coeffs, dtype=float)))
    poly = np.trim_zeros(poly, "b")
    if len(poly) <= 1:
        return True
    roots = np.roots(poly[::-1])
    return bool(np.all(np.abs(roots) > 1.0 - 1e-6))


@dataclass(frozen=True)
class ArimaFit:
    """Fitted ARIMA(p, d, q) with the quantities needed to forecast.

    ``intercept`` is the constant of the AR recursion on the
    d-differenced scale, i.e. mean * (1 - sum of AR coefficients); for
    d = 1 it acts as a drift.  ``fallback`` flags fits produced by the
    AR-by-AIC rescue path after the main search failed.
    """

    order: tuple
    ar_coeffs: np.ndarray = field(default_factory=lambda: np.empty(0))
    ma_coeffs: np.ndarray = field(default_factory=lambda: np.empty(0))
    intercept: float = 0.0
    sigma2: float = 0.0
    aicc: float = math.inf
    fallback: bool = False

    def __post_init__(self):
        p, d, q = self.order
        ar = np.array(self.ar_coeffs, dtype=float, copy=True).reshape(-1)
        ma = np.array(self.ma_coeffs, dtype=float, copy=True).reshape(-1)
        if not (0 <= p <= MAX_P and 0 <= d <= MAX_D and 0 <= q <= MAX_Q):
            raise ValueError(f"order {self.order} out of bounds")
        if len(ar) != p or len(ma) != q:
            raise ValueError("coefficient lengths do not match the order")
        if not _poly_roots_outside(ar, -1.0):
            raise ValueError("AR polynomial is not stationary")
        if not _poly_roots_outside(ma, +1.0):
            raise ValueError("MA polynomial is not invertible")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        ar.setflags(write=False)
        ma.setflags(write=False)
        object.__setattr__(self, "order", (int(p), int(d), int(q)))
        object.__setattr__(self, "ar_coeffs", ar)
        object.__setattr__(self, "ma_coeffs", ma)

    @property
    def mean(self) -> float:
        """Process mean (drift for d=1) implied by the intercept."""
        ar_sum = float(np.sum(self.ar_coeffs))
        if abs(1.0 - ar_sum) < 1e-12:
            return self.intercept
        return self.intercept / (1.0 - ar_sum)


def _kpss_level_stat(x: np.ndarray) -> float:
    """KPSS statistic against the level-stationary null."""
    n = len(x)
    e = x - x.mean()
    var = float(np.mean(e * e))
    if var <= 0.0:
        return 0.0
    bw = int(math.floor(4.0 * (n / 100.0) ** 0.25))
    lrv = var
    for lag in range(1, min(bw, n - 1) + 1):
        gamma = float(np.mean(e[:-lag] * e[lag:]))
        lrv += 2.0 * (1.0 - lag / (bw + 1.0)) * gamma
    if lrv <= 0.0:
        return math.inf
    s = np.cumsum(e)
    return float(np.sum(s * s) / (n * n * lrv))


def _choose_d(x: np.ndarray) -> int:
    d = 0
    w = x
    while d < MAX_D and _kpss_level_stat(w) > KPSS_CRIT_5PCT:
        w = np.diff(w)
        d += 1
    return d


def _ols_ar(w: np.ndarray, p: int, const: bool):
    """Least-squares AR(p); returns (intercept, coeffs, resid_var)."""
    n = len(w)
    y = w[p:]
    cols = [w[p - i - 1:n - i - 1] for i in range(p)]
    if const:
        cols = [np.ones(n - p)] + cols
    x = np.column_stack(cols) if cols else np.empty((n - p, 0))
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    if const:
        return float(beta[0]), beta[1:], float(np.mean(resid ** 2))
    return 0.0, beta, float(np.mean(resid ** 2))


def _exact_ar_fit(w: np.ndarray, d: int, const: bool):
    """Detect zero-noise AR recursions, where MLE is degenerate."""
    var = float(np.var(w))
    if var <= 0.0:
        return None
    for p in range(1, MAX_P + 1):
        if len(w) < p + 5:
            break
        c, ar, rvar = _ols_ar(w, p, const)
        if rvar <= EXACT_FIT_REL_TOL * var and _poly_roots_outside(ar, -1.0):
            return ArimaFit((p, d, 0), ar_coeffs=ar, intercept=c,
                            sigma2=rvar, aicc=-math.inf)
    return None


# Tight optimizer settings pin the optimum well below the AICc
# resolution, keeping fits reproducible under last-ulp input changes.
_FIT_KWARGS = {"maxiter": 500, "pgtol": 1e-13, "factr": 1e2, "disp": 0}


def _roots_safely_outside(coeffs: np.ndarray, sign: float) -> bool:
    """Root-modulus check discarding near-boundary (redundant) fits."""
    if len(coeffs) == 0:
        return True
    poly = np.concatenate(([1.0], sign * np.asarray(coeffs, dtype=float)))
    poly = np.trim_zeros(poly, "b")
    if len(poly) <= 1:
        return True
    roots = np.roots(poly[::-1])
    return bool(np.all(np.abs(roots) > 1.001))


def _fit_arma_candidate(w: np.ndarray, p: int, q: int, const: bool):
    """One statsmodels ARMA fit; returns (aicc, mu, ar, ma, sigma2) or None."""
    from statsmodels.tsa.arima.model import ARIMA

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = ARIMA(w, order=(p, 0, q), trend="c" if const else "n")
            res = model.fit(method_kwargs=dict(_FIT_KWARGS))
        aicc = float(res.aicc)
        if not np.isfinite(aicc):
            return None
        names = list(res.param_names)
        params = np.asarray(res.params, dtype=float)
        mu = params[names.index("const")] if "const" in names else 0.0
        ar = np.array([params[names.index(f"ar.L{i}")]
                       for i in range(1, p + 1)])
        ma = np.array([params[names.index(f"ma.L{i}")]
                       for i in range(1, q + 1)])
        sigma2 = float(params[names.index("sigma2")])
        if not _roots_safely_outside(ar, -1.0) \
                or not _roots_safely_outside(ma, 1.0):
            return None
        return aicc, float(mu), ar, ma, sigma2
    except Exception:
        return None


def _rank_key(aicc: float, p: int, q: int, const: bool):
    # Ties in AICc go to the smaller p+q, then smaller p, then with-constant.
    return (aicc, p + q, p, 0 if const else 1)


def _stepwise_search(w: np.ndarray, d: int):
    """Hill-climbing AICc search over (p, q, constant)."""
    allow_const = d <= 1
    c0 = allow_const
    tried: dict = {}

    def evaluate(p, q, const):
        key = (p, q, const)
        if key in tried:
            return tried[key]
        fit = _fit_arma_candidate(w, p, q, const)
        tried[key] = fit
        return fit

    start = [(2, 2, c0), (0, 0, c0), (1, 0, c0), (0, 1, c0)]
    if c0:
        start.append((0, 0, False))
    best_key = None
    best_rank = (math.inf, 0, 0, 0)
    for p, q, const in start:
        fit = evaluate(p, q, const)
        if fit is None:
            continue
        rank = _rank_key(fit[0], p, q, const)
        if rank < best_rank:
            best_rank, best_key = rank, (p, q, const)

    if best_key is None:
        return None, tried

    while True:
        p, q, const = best_key
        # smaller models first, moving to the first improving neighbour
        neighbours = [(p - 1, q, const), (p, q - 1, const),
                      (p - 1, q - 1, const), (p + 1, q, const),
                      (p, q + 1, const), (p + 1, q + 1, const),
                      (p - 1, q + 1, const), (p + 1, q - 1, const)]
        if allow_const:
            neighbours.append((p, q, not const))
        improved = False
        for np_, nq, nc in neighbours:
            if not (0 <= np_ <= MAX_P and 0 <= nq <= MAX_Q):
                continue
            if (np_, nq, nc) in tried:
                continue
            fit = evaluate(np_, nq, nc)
            if fit is None:
                continue
            rank = _rank_key(fit[0], np_, nq, nc)
            if rank < best_rank:
                best_rank, best_key = rank, (np_, nq, nc)
                improved = True
                break
        if not improved:
            break
    return best_key, tried


def _ar_fallback(w: np.ndarray, d: int) -> ArimaFit:
    """AR(p) by least-squares AIC, used when the main search fails."""
    n = len(w)
    const = d <= 1
    best = None
    for p in range(0, MAX_P + 1):
        if n < p + 5:
            break
        c, ar, rvar = _ols_ar(w, p, const)
        if not _poly_roots_outside(ar, -1.0):
            continue
        k = p + (1 if const else 0) + 1
        aic = n * math.log(max(rvar, 1e-300)) + 2 * k
        if best is None or aic < best[0]:
            best = (aic, p, c, ar, rvar)
    if best is None:
        raise ValueError("could not fit any autoregressive model")
    aic, p, c, ar, rvar = best
    return ArimaFit((p, d, 0), ar_coeffs=ar, intercept=c, sigma2=rvar,
                    aicc=aic, fallback=True)


def fit_auto_arima(series) -> ArimaFit:
    """Automatic ARIMA order selection and estimation for one series.

    Deterministic given the series: the differencing order comes from
    successive KPSS-type level tests (at most d=2), the (p, q) orders
    from a stepwise AICc search bounded at p, q <= 5 with no seasonal
    terms.  A constant is included for d <= 1 (mean, respectively
    drift) and excluded at d = 2.  If no candidate can be estimated,
    an AR(p)-by-AIC fallback is returned with ``fallback=True``.
    """
    x = _series_values(series)
    n = len(x)
    if n < 20:
        raise ValueError(f"need at least 20 observations, got {n}")
    d = _choose_d(x)
    w = np.diff(x, n=d) if d else x

    if np.ptp(w) == 0.0:
        return ArimaFit((0, d, 0), intercept=float(w[0]), sigma2=0.0,
                        aicc=-math.inf)
    exact = _exact_ar_fit(w, d, const=d <= 1)
    if exact is not None:
        return exact

    best_key, tried = _stepwise_search(w, d)
    if best_key is None:
        return _ar_fallback(w, d)
    p, q, const = best_key
    aicc, mu, ar, ma, sigma2 = tried[best_key]
    intercept = mu * (1.0 - float(np.sum(ar)))
    return ArimaFit((p, d, q), ar_coeffs=ar, ma_coeffs=ma,
                    intercept=intercept, sigma2=sigma2, aicc=aicc)


def forecast_scores(fit: ArimaFit, series, h: int) -> np.ndarray:
    """h-step point forecasts by the standard ARIMA recursion.

    Residuals on the differenced scale are rebuilt with zero
    pre-sample initialisation, future shocks are set to zero, and the
    d differences are undone by cumulative summation anchored at the
    series' last observations.
    """
    if h <= 0:
        raise ValueError("forecast horizon must be positive")
    x = _series_values(series)
    p, d, q = fit.order
    if len(x) <= d:
        raise ValueError("series too short for the differencing order")
    w = np.diff(x, n=d) if d else x
    mu = fit.mean
    z = w - mu

    e = np.zeros(len(z))
    for t in range(len(z)):
        acc = z[t]
        for i in range(1, min(p, t) + 1):
            acc -= fit.ar_coeffs[i - 1] * z[t - i]
        for j in range(1, min(q, t) + 1):
            acc -= fit.ma_coeffs[j - 1] * e[t - j]
        e[t] = acc

    zext = np.concatenate([z, np.zeros(h)])
    nz = len(z)
    for k in range(h):
        t = nz + k
        acc = 0.0
        for i in range(1, p + 1):
            if t - i >= 0:
                acc += fit.ar_coeffs[i - 1] * zext[t - i]
        for j in range(1, q + 1):
            if 0 <= t - j < nz:
                acc += fit.ma_coeffs[j - 1] * e[t - j]
        zext[t] = acc
    wf = zext[nz:] + mu

    if d == 0:
        return wf
    if d == 1:
        return x[-1] + np.cumsum(wf)
    first = (x[-1] - x[-2]) + np.cumsum(wf)
    return x[-1] + np.cumsum(first)


def rw_curve_forecast(panel: CurvePanel, h: int) -> np.ndarray:
    """Random-walk benchmark: the last observed curve, for any horizon."""
    if h <= 0:
        raise ValueError("forecast horizon must be positive")
    if panel.n == 0:
        raise ValueError("empty panel")
    return panel.values[-1].copy()


def ar1_curve_forecast(panel: CurvePanel, h: int) -> np.ndarray:
    """Pointwise AR(1)-with-intercept benchmark, iterated to horizon h."""
    if h <= 0:
        raise ValueError("forecast horizon must be positive")
    if panel.n < 10:
        raise ValueError(f"need at least 10 observations, got {panel.n}")
    vals = panel.values
    prev, nxt = vals[:-1], vals[1:]
    mx = prev.mean(axis=0)
    my = nxt.mean(axis=0)
    sxx = ((prev - mx) ** 2).mean(axis=0)
    sxy = ((prev - mx) * (nxt - my)).mean(axis=0)
    slope = np.divide(sxy, sxx, out=np.zeros_like(sxx), where=sxx > 0)
    const = my - slope * mx
    fc = vals[-1].copy()
    for _ in range(h):
        fc = const + slope * fc
    return fc
