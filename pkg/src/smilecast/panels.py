"""Discretised functional data model: delta grids, curve panels, panel sets.

A smile observed on one day is a curve sampled at a handful of delta
points.  Curves are kept as plain vectors on the observed grid and all
L2 geometry (inner products, norms) is discretised with trapezoid
quadrature over the grid span.  No basis smoothing is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DeltaGrid",
    "CurvePanel",
    "PanelSet",
    "cross_sectional_mean",
    "inner_product",
    "average_panel",
]


def _as_float_matrix(values, name: str) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    if out.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got ndim={out.ndim}")
    return out


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Trapezoid quadrature weights for an increasing abscissa vector.

    The weights are positive and sum to the grid span, so integrating
    the constant function 1 returns ``max(points) - min(points)``.
    """
    points = np.asarray(points, dtype=float)
    w = np.empty_like(points)
    w[0] = (points[1] - points[0]) / 2.0
    w[-1] = (points[-1] - points[-2]) / 2.0
    if len(points) > 2:
        w[1:-1] = (points[2:] - points[:-2]) / 2.0
    return w


@dataclass(frozen=True)
class DeltaGrid:
    """Common delta abscissae plus quadrature weights for one smile.

    Parameters
    ----------
    points : array-like
        Strictly increasing delta values (e.g. ``[10, 25, 50, 75, 90]``).
    quadrature_weights : array-like, optional
        Positive weights summing to the grid span.  Defaults to
        trapezoid weights derived from ``points``.
    """

    points: np.ndarray
    quadrature_weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim != 1 or len(pts) < 2:
            raise ValueError("grid needs at least 2 points")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        if self.quadrature_weights is None:
            w = trapezoid_weights(pts)
        else:
            w = np.array(self.quadrature_weights, dtype=float, copy=True)
            if w.shape != pts.shape:
                raise ValueError("quadrature_weights shape mismatch")
            if not np.all(w > 0):
                raise ValueError("quadrature_weights must be positive")
            span = pts[-1] - pts[0]
            if abs(w.sum() - span) > 1e-8 * max(1.0, span):
                raise ValueError("quadrature_weights must sum to the grid span")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "quadrature_weights", w)

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def span(self) -> float:
        return float(self.points[-1] - self.points[0])


@dataclass(frozen=True)
class CurvePanel:
    """n daily smiles for one maturity, sampled on a shared grid.

    ``values[i]`` is the curve observed on ``dates[i]``; entries are
    implied volatilities in percentage points and must be finite and
    positive.  Dates are opaque ordered labels; no calendar arithmetic
    is performed on them.
    """

    grid: DeltaGrid
    dates: np.ndarray
    values: np.ndarray
    maturity_label: str = ""

    def __post_init__(self):
        vals = _as_float_matrix(self.values, "values")
        dates = np.array(self.dates, copy=True)
        if dates.ndim != 1:
            raise ValueError("dates must be 1-d")
        if len(dates) != vals.shape[0]:
            raise ValueError("dates and values row count mismatch")
        if vals.shape[1] != self.grid.size:
            raise ValueError("values column count does not match grid")
        if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
            raise ValueError("dates must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values contain non-finite entries")
        if not np.all(vals > 0):
            raise ValueError("values must be strictly positive")
        vals.setflags(write=False)
        dates.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def head(self, n: int) -> "CurvePanel":
        """First ``n`` observations as a new panel (expanding windows)."""
        if not 1 <= n <= self.n:
            raise ValueError(f"head size {n} out of range 1..{self.n}")
        return CurvePanel(self.grid, self.dates[:n], self.values[:n],
                          self.maturity_label)


@dataclass(frozen=True)
class PanelSet:
    """Aligned curve panels, one per maturity, sharing grid and dates.

    The intended use has at least two maturities; a single-panel set is
    accepted so the stacked multivariate model can degenerate to the
    univariate one.
    """

    panels: tuple

    def __post_init__(self):
        panels = tuple(self.panels)
        if len(panels) < 1:
            raise ValueError("panel set needs at least one panel")
        ref = panels[0]
        for p in panels[1:]:
            if not np.array_equal(p.grid.points, ref.grid.points):
                raise ValueError("panels must share an identical grid")
            if not np.array_equal(p.dates, ref.dates):
                raise ValueError("panels must share identical dates")
        object.__setattr__(self, "panels", panels)

    @property
    def omega(self) -> int:
        return len(self.panels)

    @property
    def n(self) -> int:
        return self.panels[0].n

    @property
    def grid(self) -> DeltaGrid:
        return self.panels[0].grid

    @property
    def labels(self) -> list:
        return [p.maturity_label for p in self.panels]

    def head(self, n: int) -> "PanelSet":
        return PanelSet(tuple(p.head(n) for p in self.panels))

    def __iter__(self):
        return iter(self.panels)


def cross_sectional_mean(panel: CurvePanel) -> np.ndarray:
    """Pointwise mean curve over the panel's observations."""
    if panel.n == 0:
        raise ValueError("empty panel")
    return panel.values.mean(axis=0)


def inner_product(f: np.ndarray, g: np.ndarray, grid: DeltaGrid) -> float:
    """Discretised L2 inner product of two curves on ``grid``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (grid.size,) or g.shape != (grid.size,):
        raise ValueError("curve/grid dimension mismatch")
    return float(np.sum(grid.quadrature_weights * f * g))


def average_panel(panel_set: PanelSet) -> CurvePanel:
    """Elementwise average of the set's panels, keeping dates and grid."""
    stacked = np.stack([p.values for p in panel_set.panels])
    avg = stacked.mean(axis=0)
    return CurvePanel(panel_set.grid, panel_set.panels[0].dates, avg,
                      maturity_label="avg")
