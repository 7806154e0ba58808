"""Seeded synthetic smile-panel generators for tests and fixtures.

All generators are deterministic functions of an explicit seed or
generator object.  Loading curves are built by Gram-Schmidt under the
grid quadrature so factor models are exactly orthonormal, which makes
recovered eigenstructures directly comparable to the generator's.
"""

from __future__ import annotations

import numpy as np

from .panels import CurvePanel, DeltaGrid, PanelSet
from .trading import MarketSeries

__all__ = [
    "default_grid",
    "date_labels",
    "orthonormal_curves",
    "score_series",
    "factor_panel",
    "iid_panel",
    "multilevel_set",
    "market_series",
]

DEFAULT_DELTAS = (10.0, 25.0, 50.0, 75.0, 90.0)
BASE_LEVEL = 10.0  # keeps synthetic IVs safely positive, in pct points


def default_grid() -> DeltaGrid:
    return DeltaGrid(np.array(DEFAULT_DELTAS))


def date_labels(n: int, start: int = 0) -> np.ndarray:
    """Zero-padded opaque date labels that sort chronologically."""
    return np.array([f"d{start + i:06d}" for i in range(n)])


def orthonormal_curves(grid: DeltaGrid, k: int) -> np.ndarray:
    """k smooth curves, orthonormal under the grid quadrature."""
    if k > grid.size:
        raise ValueError("cannot build more curves than grid points")
    x = np.linspace(0.0, 1.0, grid.size)
    raw = np.array([np.cos(np.pi * j * x) + (0.1 * j) * x
                    for j in range(k)])
    w = grid.quadrature_weights
    out = np.empty_like(raw)
    for j in range(k):
        v = raw[j].copy()
        for i in range(j):
            v -= np.sum(w * v * out[i]) * out[i]
        norm = np.sqrt(np.sum(w * v * v))
        out[j] = v / norm
    return out


def score_series(rng: np.random.Generator, n: int, kind: str = "iid",
                 coef: float = 0.0, sigma: float = 1.0) -> np.ndarray:
    """One score path: iid, AR(1) with ``coef``, or MA(1) with ``coef``."""
    if kind == "iid":
        return sigma * rng.standard_normal(n)
    if kind == "ar1":
        x = np.empty(n)
        x[0] = sigma * rng.standard_normal() / np.sqrt(1.0 - coef ** 2)
        for t in range(1, n):
            x[t] = coef * x[t - 1] + sigma * rng.standard_normal()
        return x
    if kind == "ma1":
        e = sigma * rng.standard_normal(n + 1)
        return e[1:] + coef * e[:-1]
    if kind == "decay":
        # zero-noise AR(1) recursion, x_0 = sigma
        return sigma * coef ** np.arange(n)
    raise ValueError(f"unknown score kind: {kind!r}")


def factor_panel(seed, n: int, loadings: np.ndarray, scores: np.ndarray,
                 noise: float = 0.0, grid: DeltaGrid | None = None,
                 label: str = "1M", base: float = BASE_LEVEL) -> CurvePanel:
    """Panel built as base + scores @ loadings + optional iid noise."""
    rng = np.random.default_rng(seed) if not isinstance(
        seed, np.random.Generator) else seed
    grid = grid or default_grid()
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    if scores.shape[0] != n:
        raise ValueError("scores must have one row per observation")
    values = base + scores @ np.atleast_2d(loadings)
    if noise > 0:
        values = values + noise * rng.standard_normal((n, grid.size))
    return CurvePanel(grid, date_labels(n), values, maturity_label=label)


def iid_panel(seed, n: int, grid: DeltaGrid | None = None,
              scale: float = 1.0, label: str = "1M") -> CurvePanel:
    """Independent Gaussian curves around the base level."""
    rng = np.random.default_rng(seed) if not isinstance(
        seed, np.random.Generator) else seed
    grid = grid or default_grid()
    values = BASE_LEVEL + scale * rng.standard_normal((n, grid.size))
    return CurvePanel(grid, date_labels(n), values, maturity_label=label)


def multilevel_set(seed, n: int, labels=("1M", "6M", "2Y"),
                   common_sd: float = 2.0, resid_sd=(1.0, 0.8, 0.6),
                   common_kind: str = "ar1", common_coef: float = 0.5,
                   grid: DeltaGrid | None = None) -> tuple:
    """Panel set with a shared trend plus per-maturity residual trends.

    Returns ``(panel_set, info)`` where ``info`` carries the generator
    quantities needed by oracles: loading curves, score paths and the
    per-maturity deviations.
    """
    rng = np.random.default_rng(seed) if not isinstance(
        seed, np.random.Generator) else seed
    grid = grid or default_grid()
    omega = len(labels)
    curves = orthonormal_curves(grid, omega + 1)
    common_curve, resid_curves = curves[0], curves[1:]
    beta = score_series(rng, n, common_kind, common_coef, common_sd)
    offsets = np.linspace(-1.0, 1.0, omega)[:, None] * np.ones(grid.size)
    offsets -= offsets.mean(axis=0)
    panels = []
    gammas = []
    for j, lab in enumerate(labels):
        gamma = score_series(rng, n, "iid", 0.0, resid_sd[j])
        gammas.append(gamma)
        values = (BASE_LEVEL + offsets[j]
                  + np.outer(beta, common_curve)
                  + np.outer(gamma, resid_curves[j]))
        panels.append(CurvePanel(grid, date_labels(n), values,
                                 maturity_label=lab))
    info = {
        "common_curve": common_curve,
        "resid_curves": resid_curves,
        "beta": beta,
        "gammas": np.array(gammas),
        "offsets": offsets,
    }
    return PanelSet(tuple(panels)), info


def market_series(seed, dates: np.ndarray) -> MarketSeries:
    """Random-walk spot around 1.10 with small constant-ish rates."""
    rng = np.random.default_rng(seed) if not isinstance(
        seed, np.random.Generator) else seed
    n = len(dates)
    spot = 1.10 * np.exp(np.cumsum(0.004 * rng.standard_normal(n)))
    r_d = 0.02 + 0.001 * rng.standard_normal(n)
    r_f = 0.01 + 0.001 * rng.standard_normal(n)
    return MarketSeries(np.array(dates), spot, r_d, r_f)
