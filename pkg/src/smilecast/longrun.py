"""Long-run covariance estimation and dynamic FPCA.

The long-run covariance surface is the kernel-weighted sum of
autocovariance surfaces over all lags,

    C_h(t, s) = sum_l W(l / h) gamma_l(t, s),

truncated where the weight function's bounded support kills the terms.
Decomposing C_h instead of the lag-0 covariance yields dynamic
functional principal components, which remain consistent under
temporal dependence of the daily curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fpca import FpcaBasis, basis_from_covariance, covariance_matrix
from .panels import CurvePanel

__all__ = [
    "KernelWeights",
    "BandwidthSpec",
    "autocovariance_lag",
    "long_run_covariance",
    "plugin_bandwidth",
    "fit_dynamic_fpca",
]

# Pilot lags enter the plug-in only while their quadrature norm exceeds
# this multiple of the iid noise floor; see plugin_bandwidth.
PILOT_SCREEN_FACTOR = 1.5


@dataclass(frozen=True)
class KernelWeights:
    """Symmetric bounded-support weight function for the lag sum.

    Families
    --------
    ``bartlett``
        W(u) = 1 - |u|/m on [-m, m], order 1.
    ``flat_top``
        W(u) = 1 on |u| <= m/2, decaying linearly to 0 at |u| = m.
        The exact plateau near zero gives small bias; order defaults
        to 2 for bandwidth-rate purposes.

    Both satisfy W(0) = 1, symmetry, continuity and bounded support.
    """

    family: str = "flat_top"
    order_q: int = 2
    support_m: float = 1.0

    def __post_init__(self):
        if self.family not in ("bartlett", "flat_top"):
            raise ValueError(f"unknown kernel family: {self.family!r}")
        if self.order_q < 1:
            raise ValueError("order_q must be a positive integer")
        if self.support_m <= 0:
            raise ValueError("support_m must be positive")

    def __call__(self, u) -> np.ndarray:
        u = np.abs(np.asarray(u, dtype=float))
        m = self.support_m
        if self.family == "bartlett":
            w = 1.0 - u / m
        else:
            w = 2.0 * (1.0 - u / m)
        return np.clip(w, 0.0, 1.0) * (u <= m)

    @property
    def squared_l2_norm(self) -> float:
        """Integral of W(u)^2 over the real line (closed form)."""
        if self.family == "bartlett":
            return 2.0 * self.support_m / 3.0
        return 4.0 * self.support_m / 3.0


@dataclass(frozen=True)
class BandwidthSpec:
    """Fixed bandwidth, or plug-in selection with optional pilot override."""

    mode: str = "plugin"
    h: float | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "plugin"):
            raise ValueError("bandwidth mode must be 'fixed' or 'plugin'")
        if self.mode == "fixed":
            if self.h is None or self.h < 0:
                raise ValueError("fixed bandwidth must be a nonnegative real")
        elif self.h is not None and self.h <= 0:
            raise ValueError("plug-in pilot bandwidth must be positive")

    def resolve(self, panel: CurvePanel, weights: KernelWeights) -> float:
        if self.mode == "fixed":
            return float(self.h)
        return plugin_bandwidth(panel, weights, initial_h=self.h)


def autocov_matrix(values: np.ndarray, lag: int) -> np.ndarray:
    """Autocovariance surface of a raw n x R matrix at a signed lag."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if abs(lag) >= n:
        raise ValueError(f"|lag|={abs(lag)} must be < n={n}")
    if lag < 0:
        return autocov_matrix(values, -lag).T
    z = values - values.mean(axis=0)
    return z[:n - lag].T @ z[lag:] / n


def autocovariance_lag(panel: CurvePanel, lag: int) -> np.ndarray:
    """gamma_l(t, s) with full-sample mean centring and divisor 1/n.

    Negative lags use the transpose identity
    gamma_{-l}(t, s) = gamma_l(s, t).  Lag 0 coincides exactly with the
    sample covariance surface.
    """
    return autocov_matrix(panel.values, lag)


def longrun_matrix(values: np.ndarray, quad_w: np.ndarray,
                   weights: KernelWeights, h: float,
                   max_lag: int | None = None) -> np.ndarray:
    """Kernel-weighted lag sum on raw values; see long_run_covariance.

    ``max_lag`` overrides the truncation bound; lags with zero weight
    are skipped, so enlarging the bound beyond the kernel support
    leaves the result bit-identical.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    cov = covariance_matrix(values)
    if h > 0:
        if max_lag is None:
            max_lag = min(n - 1, math.ceil(weights.support_m * h))
        max_lag = min(max_lag, n - 1)
        for lag in range(1, max_lag + 1):
            w_l = float(weights(lag / h))
            if w_l == 0.0:
                continue
            g = autocov_matrix(values, lag)
            cov = cov + w_l * (g + g.T)
    return _check_spectrum(cov, quad_w)


def _check_spectrum(cov: np.ndarray, quad_w: np.ndarray) -> np.ndarray:
    """Handle the finite-sample indefiniteness of the kernel sum.

    Three regimes by the most negative eigenvalue: rounding-level dust
    leaves the input untouched bit for bit (so the h -> 0 reduction to
    the lag-0 covariance stays exact); an estimate dominated by
    negative mass raises; moderate negatives in between are clamped to
    zero and the surface rebuilt.
    """
    sw = np.sqrt(quad_w)
    b = sw[:, None] * cov * sw[None, :]
    vals = np.linalg.eigvalsh((b + b.T) / 2.0)
    trace = float(np.sum(vals))
    lam_min = float(vals[0])
    if lam_min >= -1e-14 * max(trace, 1.0):
        return cov
    if lam_min < -0.1 * max(trace, 0.0):
        raise ValueError("long-run covariance estimate is severely "
                         "indefinite; widen the bandwidth or check the data")
    vals_full, vecs = np.linalg.eigh((b + b.T) / 2.0)
    b_psd = (vecs * np.maximum(vals_full, 0.0)) @ vecs.T
    out = b_psd / sw[:, None] / sw[None, :]
    return (out + out.T) / 2.0


def long_run_covariance(panel: CurvePanel, weights: KernelWeights,
                        bw: BandwidthSpec) -> np.ndarray:
    """Kernel sandwich estimator of the long-run covariance surface.

    The lag sum is truncated at ``ceil(support_m * h)`` where the
    weights vanish; ``h = 0`` reduces the estimator exactly to the
    lag-0 sample covariance.
    """
    h = bw.resolve(panel, weights)
    return longrun_matrix(panel.values, panel.grid.quadrature_weights,
                          weights, h)


def _quad_norm2(a: np.ndarray, quad_w: np.ndarray) -> float:
    return float(quad_w @ (a * a) @ quad_w)


def plugin_bandwidth_matrix(values: np.ndarray, quad_w: np.ndarray,
                            weights: KernelWeights,
                            initial_h: float | None = None) -> float:
    """Plug-in bandwidth on raw values; see plugin_bandwidth."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 10:
        raise ValueError("insufficient sample for plug-in")
    q = weights.order_q
    h0 = float(initial_h) if initial_h is not None else n ** (1.0 / (2 * q + 1))
    max_lag = min(n - 1, math.ceil(weights.support_m * h0))

    gamma0 = covariance_matrix(values)
    trace0 = float(quad_w @ np.diag(gamma0))
    noise_floor = (PILOT_SCREEN_FACTOR ** 2) * trace0 * trace0 / n

    c_pilot = gamma0.copy()
    c_deriv = np.zeros_like(gamma0)
    last_kept = 0
    for lag in range(1, max_lag + 1):
        g = autocov_matrix(values, lag)
        if _quad_norm2(g, quad_w) <= noise_floor:
            break
        last_kept = lag
        w_l = float(weights(lag / h0))
        sym = g + g.T
        c_pilot = c_pilot + w_l * sym
        c_deriv = c_deriv + w_l * (lag ** q) * sym

    if weights.family == "flat_top":
        # the flat-top's formal bias constant is zero, so the MSE ratio
        # below does not apply; size the exact plateau to just cover the
        # detected dependence length instead (any larger h adds variance
        # without removing bias)
        return 2.0 * last_kept / weights.support_m

    trace_p = float(quad_w @ np.diag(c_pilot))
    denom = weights.squared_l2_norm * (_quad_norm2(c_pilot, quad_w)
                                       + trace_p * trace_p)
    numer = q * _quad_norm2(c_deriv, quad_w)
    if denom <= 0.0 or numer <= 0.0:
        return 0.0
    return h0 * (numer / denom) ** (1.0 / (2 * q + 1))


def plugin_bandwidth(panel: CurvePanel, weights: KernelWeights,
                     initial_h: float | None = None) -> float:
    """Data-driven bandwidth for the kernel sandwich estimator.

    The recipe, frozen here and by regression tests:

    1. pilot bandwidth h0 = n^(1/(2q+1)) unless ``initial_h`` is given;
    2. pilot surfaces C0 = sum W(l/h0) gamma_l and
       Cq = sum W(l/h0) |l|^q gamma_l, where the lag sums run over
       consecutive lags whose quadrature norm exceeds 1.5x the iid
       noise floor trace(gamma_0)^2 / n and stop at the first lag
       below it (white noise therefore keeps no lags and the
       bandwidth collapses to zero);
    3. for the Bartlett family,
       h = h0 * (q ||Cq||^2 / (||W||_2^2 (||C0||^2 + trace(C0)^2)))
       ^(1/(2q+1)), with all norms discretised by grid quadrature and
       the kernel's bias constant taken as 1;
    4. for the flat-top family the MSE ratio is degenerate (the exact
       plateau has zero bias constant), so h = 2 * l* / m with l* the
       last screened-in lag: the plateau exactly covers the detected
       dependence length, and white noise yields h = 0.

    This is a documented interpretation of pilot-based plug-in
    selection; fixed-bandwidth mode exists so results remain auditable
    without it.
    """
    return plugin_bandwidth_matrix(panel.values,
                                   panel.grid.quadrature_weights,
                                   weights, initial_h)


def fit_dynamic_fpca(panel: CurvePanel, weights: KernelWeights,
                     bw: BandwidthSpec, k_rule) -> FpcaBasis:
    """FPCA of the long-run covariance surface.

    With weights that vanish at every nonzero lag this is bit-identical
    to the static fit: both paths share the covariance-to-basis code.
    """
    cov = long_run_covariance(panel, weights, bw)
    return basis_from_covariance(panel.values, panel.grid.quadrature_weights,
                                 cov, k_rule, kind="dynamic")
