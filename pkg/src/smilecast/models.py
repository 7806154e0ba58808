"""The functional time-series forecasters: univariate, multivariate
stacked, and multilevel, each in a static and a dynamic flavour.

All three share the same backbone: extract an orthonormal basis from a
covariance surface (lag-0 or long-run), forecast each component-score
series with automatic ARIMA, and rebuild curves from the forecast
scores.  They differ in what gets decomposed:

* univariate      - one maturity's panel at a time;
* multivariate    - all maturities standardised, stacked into one long
                    vector and decomposed jointly;
* multilevel      - a common trend extracted from the across-maturity
                    average, plus per-maturity residual trends, each
                    with its own basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fpca import CPV, FpcaBasis, basis_from_covariance, covariance_matrix
from .longrun import (BandwidthSpec, KernelWeights, longrun_matrix,
                      plugin_bandwidth_matrix)
from .panels import CurvePanel, PanelSet
from .scores import fit_auto_arima, forecast_scores

__all__ = [
    "ModelSpec",
    "MultilevelFit",
    "ForecastBundle",
    "forecast_univariate",
    "forecast_multivariate",
    "fit_multilevel",
    "within_cluster_variability",
    "forecast_multilevel",
    "fit_forecaster",
]

_FAMILIES = ("univariate", "multivariate", "multilevel")
_BASE_IDS = {"univariate": "FTS", "multivariate": "MFTS",
             "multilevel": "MLFTS"}


@dataclass(frozen=True)
class ModelSpec:
    """Which forecaster to run and how its components are selected.

    ``k_rule`` drives the (common) component count; ``l_rule`` the
    residual level and is only meaningful for the multilevel family.
    ``kernel`` and ``bandwidth`` configure the long-run covariance and
    are used only when ``covariance_kind`` is dynamic.
    """

    family: str = "univariate"
    covariance_kind: str = "static"
    k_rule: object = None
    l_rule: object = None
    kernel: KernelWeights = field(default_factory=KernelWeights)
    bandwidth: BandwidthSpec = field(default_factory=BandwidthSpec)
    model_id: str = ""

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family: {self.family!r}")
        if self.covariance_kind not in ("static", "dynamic"):
            raise ValueError("covariance_kind must be 'static' or 'dynamic'")
        if self.k_rule is None:
            default = CPV(0.9) if self.family == "multilevel" else CPV(0.99)
            object.__setattr__(self, "k_rule", default)
        if self.family == "multilevel":
            if self.l_rule is None:
                object.__setattr__(self, "l_rule", CPV(0.9))
        elif self.l_rule is not None:
            raise ValueError("l_rule is only valid for the multilevel family")
        if not self.model_id:
            base = _BASE_IDS[self.family]
            if self.covariance_kind == "dynamic":
                base = "D" + base
            object.__setattr__(self, "model_id", base)

    @property
    def dynamic(self) -> bool:
        return self.covariance_kind == "dynamic"


@dataclass(frozen=True)
class ForecastBundle:
    """Per-maturity curve forecasts from one model at one origin.

    ``origin_index`` is the number of observations the model was fitted
    on; the forecast targets row ``origin_index + horizon - 1``.
    """

    model_id: str
    origin_index: int
    horizon: int
    forecasts: dict
    retained_components: dict

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        for label, curve in self.forecasts.items():
            if not np.all(np.isfinite(curve)):
                raise ValueError(f"non-finite forecast for {label!r}")

    def curve(self, label=None) -> np.ndarray:
        if label is None:
            if len(self.forecasts) != 1:
                raise ValueError("maturity label required")
            return next(iter(self.forecasts.values()))
        return self.forecasts[label]


def _empty_basis(values: np.ndarray, quad_w: np.ndarray,
                 kind: str) -> FpcaBasis:
    r = len(quad_w)
    return FpcaBasis(quad_w, values.mean(axis=0), np.empty(0),
                     np.empty((0, r)), np.empty((values.shape[0], 0)),
                     kind=kind)


def _fit_values_basis(values: np.ndarray, quad_w: np.ndarray,
                      spec: ModelSpec, k_rule, cap_rank: bool = False,
                      allow_empty: bool = False) -> FpcaBasis:
    """Basis of the lag-0 or long-run covariance of a value matrix."""
    kind = spec.covariance_kind
    if allow_empty:
        centred = values - values.mean(axis=0)
        scale = max(1.0, float(np.max(np.abs(values))))
        if np.max(np.abs(centred)) <= 1e-12 * scale:
            # variation at rounding level carries no signal to decompose
            return _empty_basis(values, quad_w, kind)
    if spec.dynamic:
        h = spec.bandwidth.h if spec.bandwidth.mode == "fixed" else None
        if h is None:
            h = plugin_bandwidth_matrix(values, quad_w, spec.kernel,
                                        initial_h=spec.bandwidth.h)
        cov = longrun_matrix(values, quad_w, spec.kernel, h)
    else:
        cov = covariance_matrix(values)
    try:
        return basis_from_covariance(values, quad_w, cov, k_rule, kind,
                                     cap_rank=cap_rank)
    except ValueError as err:
        if allow_empty and "degenerate covariance" in str(err):
            return _empty_basis(values, quad_w, kind)
        raise


class _ScoreForecaster:
    """Caches one auto-ARIMA fit per score column of a basis.

    Columns whose amplitude is at rounding level relative to the
    leading one (zero-eigenvalue directions of rank-deficient panels)
    are forecast as zero rather than run through estimation.
    """

    def __init__(self, scores: np.ndarray):
        self._scores = scores
        lead = float(np.max(np.abs(scores))) if scores.size else 0.0
        self._live = [scores.size > 0
                      and float(np.max(np.abs(scores[:, k]))) > 1e-9 * lead
                      for k in range(scores.shape[1])]
        self._fits = [fit_auto_arima(scores[:, k]) if live else None
                      for k, live in enumerate(self._live)]

    def predict(self, h: int) -> np.ndarray:
        """h-step-ahead score matrix, one row per step."""
        if self._scores.shape[1] == 0:
            return np.zeros((h, 0))
        cols = [forecast_scores(fit, self._scores[:, k], h)
                if fit is not None else np.zeros(h)
                for k, fit in enumerate(self._fits)]
        return np.column_stack(cols)


class _FittedUnivariate:
    def __init__(self, panel: CurvePanel, spec: ModelSpec):
        self.label = panel.maturity_label
        # allow_empty: a panel with no variation forecasts its mean curve
        self.basis = _fit_values_basis(panel.values,
                                       panel.grid.quadrature_weights,
                                       spec, spec.k_rule, allow_empty=True)
        self._sf = _ScoreForecaster(self.basis.scores)
        self.retained = {"K": self.basis.n_components}

    def predict(self, h: int) -> dict:
        fc = self._sf.predict(h)[h - 1]
        return {self.label: self.basis.mean + fc @ self.basis.eigenfunctions}

    def fitted_values(self) -> dict:
        return {self.label: self.basis.reconstruct()}


class _FittedMultivariate:
    def __init__(self, panel_set: PanelSet, spec: ModelSpec):
        self.labels = panel_set.labels
        if panel_set.omega == 1:
            # A one-panel stack is the univariate problem; delegating
            # keeps the two bit-identical.
            self._delegate = _FittedUnivariate(panel_set.panels[0], spec)
            self.retained = self._delegate.retained
            return
        self._delegate = None
        r = panel_set.grid.size
        self._nu = [p.values.mean(axis=0) for p in panel_set.panels]
        centred = [p.values - nu for p, nu in zip(panel_set.panels, self._nu)]
        self._scale = [float(np.sqrt(np.mean(c ** 2))) for c in centred]
        if any(s <= 0 for s in self._scale):
            raise ValueError("degenerate covariance")
        stacked = np.hstack([c / s for c, s in zip(centred, self._scale)])
        quad_w = np.tile(panel_set.grid.quadrature_weights, panel_set.omega)
        self.basis = _fit_values_basis(stacked, quad_w, spec, spec.k_rule,
                                       cap_rank=True)
        self._sf = _ScoreForecaster(self.basis.scores)
        self._r = r
        self.retained = {"K": self.basis.n_components}

    def predict(self, h: int) -> dict:
        if self._delegate is not None:
            out = self._delegate.predict(h)
            return {self.labels[0]: out[self._delegate.label]}
        fc = self._sf.predict(h)[h - 1]
        z = self.basis.mean + fc @ self.basis.eigenfunctions
        out = {}
        for j, label in enumerate(self.labels):
            block = z[j * self._r:(j + 1) * self._r]
            out[label] = self._nu[j] + self._scale[j] * block
        return out

    def fitted_values(self) -> dict:
        if self._delegate is not None:
            out = self._delegate.fitted_values()
            return {self.labels[0]: out[self._delegate.label]}
        z = self.basis.reconstruct()
        out = {}
        for j, label in enumerate(self.labels):
            block = z[:, j * self._r:(j + 1) * self._r]
            out[label] = self._nu[j] + self._scale[j] * block
        return out


@dataclass(frozen=True)
class MultilevelFit:
    """Two-stage decomposition: common trend plus per-maturity residuals.

    ``deviations[j]`` is the j-th maturity's mean-curve offset from the
    grand mean; the offsets sum to zero across maturities by
    construction.  ``residual_variances[j]`` is the mean squared
    remainder after both stages.
    """

    labels: tuple
    grand_mean: np.ndarray
    deviations: np.ndarray
    common_basis: FpcaBasis
    residual_bases: tuple
    residual_variances: np.ndarray

    def __post_init__(self):
        dev = np.asarray(self.deviations, dtype=float)
        if dev.shape[0] != len(self.labels):
            raise ValueError("one deviation curve per maturity required")
        colsum = np.abs(dev.sum(axis=0)).max()
        if colsum > 1e-10 * max(1.0, float(np.abs(dev).max())):
            raise ValueError("maturity deviations must sum to zero")

    def maturity_mean(self, j: int) -> np.ndarray:
        return self.grand_mean + self.deviations[j]

    def index_of(self, maturity) -> int:
        if isinstance(maturity, (int, np.integer)):
            return int(maturity)
        return self.labels.index(maturity)


def fit_multilevel(panel_set: PanelSet, spec: ModelSpec) -> MultilevelFit:
    """Stage one on the across-maturity average, stage two per maturity.

    The common trend basis is fitted to the centred averaged panel; the
    per-maturity residual bases to what remains after removing the
    maturity mean and the reconstructed common trend.  A degenerate
    stage (no variance left) yields an empty basis rather than an
    error, so perfectly-common panels are representable.
    """
    if spec.family != "multilevel":
        raise ValueError("spec.family must be 'multilevel'")
    quad_w = panel_set.grid.quadrature_weights
    avg = np.mean([p.values for p in panel_set.panels], axis=0)
    grand_mean = avg.mean(axis=0)
    common = _fit_values_basis(avg, quad_w, spec, spec.k_rule,
                               allow_empty=True)
    r_hat = common.scores @ common.eigenfunctions

    deviations = []
    bases = []
    variances = []
    for panel in panel_set.panels:
        mu_j = panel.values.mean(axis=0)
        deviations.append(mu_j - grand_mean)
        resid = panel.values - mu_j - r_hat
        basis = _fit_values_basis(resid, quad_w, spec, spec.l_rule,
                                  allow_empty=True)
        u_hat = basis.reconstruct()
        variances.append(float(np.mean((resid - u_hat) ** 2)))
        bases.append(basis)
    return MultilevelFit(tuple(panel_set.labels), grand_mean,
                         np.asarray(deviations), common, tuple(bases),
                         np.asarray(variances))


def within_cluster_variability(fit: MultilevelFit, maturity) -> float:
    """Share of retained eigenvalue mass carried by the common trend."""
    j = fit.index_of(maturity)
    common = float(np.sum(fit.common_basis.eigenvalues))
    resid = float(np.sum(fit.residual_bases[j].eigenvalues))
    total = common + resid
    if total <= 0.0:
        raise ValueError("degenerate fit")
    return common / total


class _FittedMultilevel:
    def __init__(self, panel_set: PanelSet, spec: ModelSpec):
        self.labels = panel_set.labels
        self.fit = fit_multilevel(panel_set, spec)
        self._sf_common = _ScoreForecaster(self.fit.common_basis.scores)
        self._sf_resid = [_ScoreForecaster(b.scores)
                          for b in self.fit.residual_bases]
        self.retained = {
            "K": self.fit.common_basis.n_components,
            "L": {lab: b.n_components
                  for lab, b in zip(self.labels, self.fit.residual_bases)},
        }

    def predict(self, h: int) -> dict:
        common_fc = self._sf_common.predict(h)[h - 1]
        common_curve = common_fc @ self.fit.common_basis.eigenfunctions
        out = {}
        for j, label in enumerate(self.labels):
            basis = self.fit.residual_bases[j]
            resid_fc = self._sf_resid[j].predict(h)[h - 1]
            resid_curve = basis.mean + resid_fc @ basis.eigenfunctions
            out[label] = (self.fit.maturity_mean(j) + common_curve
                          + resid_curve)
        return out

    def fitted_values(self) -> dict:
        cb = self.fit.common_basis
        r_hat = cb.scores @ cb.eigenfunctions
        out = {}
        for j, label in enumerate(self.labels):
            u_hat = self.fit.residual_bases[j].reconstruct()
            out[label] = self.fit.maturity_mean(j) + r_hat + u_hat
        return out


def fit_forecaster(panel_set: PanelSet, spec: ModelSpec):
    """Fit ``spec`` on a panel set; the result exposes ``predict(h)``."""
    if spec.family == "univariate":
        if panel_set.omega != 1:
            raise ValueError("univariate spec expects a single panel")
        return _FittedUnivariate(panel_set.panels[0], spec)
    if spec.family == "multivariate":
        return _FittedMultivariate(panel_set, spec)
    return _FittedMultilevel(panel_set, spec)


def _bundle(fitted, spec: ModelSpec, origin_index: int, h: int,
            forecasts: dict) -> ForecastBundle:
    return ForecastBundle(model_id=spec.model_id, origin_index=origin_index,
                          horizon=h, forecasts=forecasts,
                          retained_components=fitted.retained)


def forecast_univariate(panel: CurvePanel, spec: ModelSpec,
                        h: int) -> ForecastBundle:
    """h-step-ahead curve forecast for one maturity."""
    if spec.family != "univariate":
        raise ValueError("spec.family must be 'univariate'")
    fitted = _FittedUnivariate(panel, spec)
    return _bundle(fitted, spec, panel.n, h, fitted.predict(h))


def forecast_multivariate(panel_set: PanelSet, spec: ModelSpec,
                          h: int) -> ForecastBundle:
    """Joint h-step-ahead forecast of all maturities via stacking.

    Each panel is centred and scaled to unit root-mean-square before
    stacking, so rescaling one input leaves the other maturities'
    forecasts unchanged; forecasts are mapped back to original scale.
    """
    if spec.family != "multivariate":
        raise ValueError("spec.family must be 'multivariate'")
    fitted = _FittedMultivariate(panel_set, spec)
    return _bundle(fitted, spec, panel_set.n, h, fitted.predict(h))


def forecast_multilevel(panel_set: PanelSet, spec: ModelSpec,
                        h: int) -> ForecastBundle:
    """h-step-ahead forecast from the two-stage multilevel fit."""
    if spec.family != "multilevel":
        raise ValueError("spec.family must be 'multilevel'")
    fitted = _FittedMultilevel(panel_set, spec)
    return _bundle(fitted, spec, panel_set.n, h, fitted.predict(h))
