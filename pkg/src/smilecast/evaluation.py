"""Expanding-window backtest harness and point-forecast error metrics.

Every model sees exactly the same expanding windows: at origin T the
training data are rows 0..T-1 of the panel set and the target of an
h-step forecast is row T+h-1.  Refits happen every ``refit_every``
origins; in between, the stale fit is asked for a correspondingly
longer horizon, so no model ever sees data past its fitting window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import ForecastBundle, ModelSpec, fit_forecaster
from .panels import CurvePanel, PanelSet
from .scores import ar1_curve_forecast, rw_curve_forecast

__all__ = [
    "BacktestPlan",
    "LossMatrix",
    "BacktestResult",
    "run_backtest",
    "mafe",
    "msfe",
    "mme",
    "r_squared",
]

BENCHMARK_IDS = ("RW", "AR1")


class _FittedBenchmark:
    def __init__(self, panel_set: PanelSet, kind: str):
        self._panels = panel_set.panels
        self._kind = kind
        self.retained = {}

    def predict(self, h: int) -> dict:
        out = {}
        for panel in self._panels:
            if self._kind == "RW":
                out[panel.maturity_label] = rw_curve_forecast(panel, h)
            else:
                out[panel.maturity_label] = ar1_curve_forecast(panel, h)
        return out


def fit_model_entry(panel_set: PanelSet, spec) -> object:
    if isinstance(spec, ModelSpec):
        if spec.family == "univariate" and panel_set.omega > 1:
            # univariate family applied per maturity, packaged as one model
            return _FittedPerMaturity(panel_set, spec)
        return fit_forecaster(panel_set, spec)
    if spec in BENCHMARK_IDS:
        return _FittedBenchmark(panel_set, spec)
    raise ValueError(f"unknown model entry: {spec!r}")


class _FittedPerMaturity:
    def __init__(self, panel_set: PanelSet, spec: ModelSpec):
        self._fits = [fit_forecaster(PanelSet((p,)), spec)
                      for p in panel_set.panels]
        self.retained = {"K": {p.maturity_label: f.retained["K"]
                               for p, f in zip(panel_set.panels, self._fits)}}

    def predict(self, h: int) -> dict:
        out = {}
        for f in self._fits:
            out.update(f.predict(h))
        return out

    def fitted_values(self) -> dict:
        out = {}
        for f in self._fits:
            out.update(f.fitted_values())
        return out


@dataclass(frozen=True)
class BacktestPlan:
    """Expanding-window schedule plus the models to run through it."""

    initial_train_size: int
    horizons: tuple
    models: tuple
    refit_every: int = 1

    def __post_init__(self):
        horizons = tuple(int(h) for h in self.horizons)
        if self.initial_train_size < 30:
            raise ValueError("initial_train_size must be at least 30")
        if not horizons or any(h < 1 for h in horizons):
            raise ValueError("horizons must be a nonempty set of positive "
                             "integers")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")
        models = tuple(self.models)
        ids = [mid for mid, _ in models]
        if len(set(ids)) != len(ids):
            raise ValueError("model ids must be unique")
        object.__setattr__(self, "horizons", tuple(sorted(set(horizons))))
        object.__setattr__(self, "models", models)


@dataclass(frozen=True)
class LossMatrix:
    """Per-origin, per-model losses for one metric, maturity, horizon."""

    metric: str
    model_ids: tuple
    values: np.ndarray
    maturity_label: str = ""
    horizon: int = 1

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if self.metric not in ("mafe", "msfe"):
            raise ValueError("metric must be 'mafe' or 'msfe'")
        if vals.ndim != 2 or vals.shape[1] != len(self.model_ids):
            raise ValueError("loss matrix shape must be origins x models")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("losses must be finite and nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "model_ids", tuple(self.model_ids))


@dataclass
class BacktestResult:
    """Forecast bundles, aligned actuals, and loss-matrix accessors."""

    plan: BacktestPlan
    labels: list
    grid_points: np.ndarray
    bundles: dict = field(default_factory=dict)
    actuals: dict = field(default_factory=dict)

    def forecast_array(self, model_id: str, h: int) -> np.ndarray:
        """(origins, maturities, deltas) forecast cube for one model."""
        bl = self.bundles[(model_id, h)]
        return np.array([[b.forecasts[lab] for lab in self.labels]
                         for b in bl])

    def loss_matrix(self, metric: str, label: str, h: int) -> LossMatrix:
        j = self.labels.index(label)
        actual = self.actuals[h][:, j, :]
        cols = []
        ids = []
        for model_id, _ in self.plan.models:
            fc = self.forecast_array(model_id, h)[:, j, :]
            if metric == "mafe":
                cols.append(np.mean(np.abs(actual - fc), axis=1))
            elif metric == "msfe":
                cols.append(np.mean((actual - fc) ** 2, axis=1))
            else:
                raise ValueError("metric must be 'mafe' or 'msfe'")
            ids.append(model_id)
        return LossMatrix(metric, tuple(ids), np.column_stack(cols),
                          maturity_label=label, horizon=h)

    def summary_rows(self, h: int) -> list:
        """Per-model, per-maturity error summaries at horizon ``h``."""
        rows = []
        actual = self.actuals[h]
        for model_id, _ in self.plan.models:
            fc = self.forecast_array(model_id, h)
            for j, label in enumerate(self.labels):
                a, f = actual[:, j, :], fc[:, j, :]
                rows.append({
                    "model": model_id, "maturity": label, "horizon": h,
                    "mafe": float(np.mean(np.abs(a - f))),
                    "msfe": float(np.mean((a - f) ** 2)),
                    "mme_u": mme(a, f, "U"),
                    "mme_o": mme(a, f, "O"),
                })
        return rows

    def delta_rows(self, h: int) -> list:
        """Per-model, per-delta summaries aggregated over maturities."""
        rows = []
        actual = self.actuals[h]
        for model_id, _ in self.plan.models:
            fc = self.forecast_array(model_id, h)
            for t, delta in enumerate(self.grid_points):
                a, f = actual[:, :, t], fc[:, :, t]
                rows.append({
                    "model": model_id, "delta": float(delta), "horizon": h,
                    "mafe": float(np.mean(np.abs(a - f))),
                    "msfe": float(np.mean((a - f) ** 2)),
                })
        return rows


def run_backtest(panel_set: PanelSet, plan: BacktestPlan) -> BacktestResult:
    """Expanding-window forecasts for every model, horizon and origin.

    For horizon h the harness produces exactly
    ``n - initial_train_size - h + 1`` forecasts.  Origins advance one
    day at a time; each model is refit every ``refit_every`` origins
    and stale fits are queried at the lengthened horizon.
    """
    n = panel_set.n
    train = plan.initial_train_size
    max_h = max(plan.horizons)
    if train + max_h > n:
        deficit = train + max_h - n
        raise ValueError(
            f"panel has n={n} observations but the plan needs at least "
            f"{train + max_h} (train {train} + max horizon {max_h}); "
            f"short by {deficit}")

    result = BacktestResult(plan=plan, labels=panel_set.labels,
                            grid_points=panel_set.grid.points.copy())
    for h in plan.horizons:
        for model_id, _ in plan.models:
            result.bundles[(model_id, h)] = []
        targets = [np.stack([p.values[t + h - 1] for p in panel_set.panels])
                   for t in range(train, n - h + 1)]
        result.actuals[h] = np.array(targets)

    fits: dict = {}
    fit_origin: dict = {}
    for t in range(train, n):
        if (t - train) % plan.refit_every == 0:
            window = panel_set.head(t)
            for model_id, spec in plan.models:
                fits[model_id] = fit_model_entry(window, spec)
                fit_origin[model_id] = t
        for h in plan.horizons:
            if t + h > n:
                continue
            for model_id, spec in plan.models:
                eff_h = h + (t - fit_origin[model_id])
                forecasts = fits[model_id].predict(eff_h)
                bundle = ForecastBundle(
                    model_id=model_id, origin_index=t, horizon=h,
                    forecasts=forecasts,
                    retained_components=fits[model_id].retained)
                result.bundles[(model_id, h)].append(bundle)
    return result


def _check_curves(actual, forecast):
    a = np.asarray(actual, dtype=float)
    f = np.asarray(forecast, dtype=float)
    if a.shape != f.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {f.shape}")
    return a, f


def mafe(actual, forecast) -> float:
    """Mean absolute error over the grid points of one curve."""
    a, f = _check_curves(actual, forecast)
    return float(np.mean(np.abs(a - f)))


def msfe(actual, forecast) -> float:
    """Mean squared error over the grid points of one curve."""
    a, f = _check_curves(actual, forecast)
    return float(np.mean((a - f) ** 2))


def mme(actuals, forecasts, flavor: str) -> float:
    """Mean mixed error, penalising one error direction more heavily.

    Cells where the forecast exceeds the actual are over-predictions,
    cells below are under-predictions, exact ties contribute nothing.
    MME(U) applies the square root (the heavier penalty for errors
    below one) to under-predictions and the absolute value to
    over-predictions; MME(O) swaps the roles.  The sum is scaled by
    the total cell count N x R.
    """
    if flavor not in ("U", "O"):
        raise ValueError("flavor must be 'U' or 'O'")
    a, f = _check_curves(actuals, forecasts)
    a = np.atleast_2d(a)
    f = np.atleast_2d(f)
    err = np.abs(a - f)
    over = f > a
    under = f < a
    if flavor == "U":
        total = err[over].sum() + np.sqrt(err[under]).sum()
    else:
        total = err[under].sum() + np.sqrt(err[over]).sum()
    return float(total / a.size)


def r_squared(panel: CurvePanel, fitted: np.ndarray):
    """Pointwise and total squared correlation of fitted curves.

    The total is the quadrature integral of R^2(t) normalised by the
    grid span, so a perfect fit scores exactly 1.
    """
    fitted = np.asarray(fitted, dtype=float)
    if fitted.shape != panel.values.shape:
        raise ValueError("fitted matrix must match the panel's shape")
    resid = np.sum((panel.values - fitted) ** 2, axis=0)
    centred = panel.values - panel.values.mean(axis=0)
    denom = np.sum(centred ** 2, axis=0)
    if np.any(denom <= 0):
        t = panel.grid.points[np.argmax(denom <= 0)]
        raise ValueError(f"no variance at grid point {t}")
    r2_curve = 1.0 - resid / denom
    w = panel.grid.quadrature_weights
    total = float(np.sum(w * r2_curve) / panel.grid.span)
    return r2_curve, total
