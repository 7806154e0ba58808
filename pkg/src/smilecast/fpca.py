"""Static functional principal component analysis on discretised curves.

The covariance surface is eigendecomposed in the weighted L2 geometry
of the grid: with W the diagonal quadrature-weight matrix, the discrete
eigenproblem C W phi = lambda phi is symmetrised as
B = W^{1/2} C W^{1/2}, so eigenfunctions come out exactly orthonormal
under the grid inner product rather than the Euclidean one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panels import CurvePanel, DeltaGrid

__all__ = [
    "CPV",
    "Fixed",
    "FpcaBasis",
    "sample_covariance",
    "eigendecompose",
    "select_k_cpv",
    "fit_static_fpca",
]

# Eigenvalues below this fraction of the leading one count as zero for
# the CPV denominator and rank decisions.
ZERO_EIGENVALUE_REL_TOL = 1e-12


@dataclass(frozen=True)
class CPV:
    """Retain the fewest components explaining ``threshold`` of variance."""

    threshold: float

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("CPV threshold must lie in (0, 1]")


@dataclass(frozen=True)
class Fixed:
    """Retain exactly ``k`` components."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("Fixed component count must be >= 1")


@dataclass(frozen=True)
class FpcaBasis:
    """Mean curve, eigenvalues, eigenfunctions and scores of one fit.

    ``eigenfunctions`` holds one component per row, orthonormal under
    the quadrature weights ``quad_weights`` (a panel's grid weights, or
    their tiled version for stacked multivariate fits).
    ``scores[i, k]`` is the projection of curve i, mean removed, onto
    component k.  ``kind`` records whether the decomposed surface was
    the lag-0 covariance ("static") or the long-run covariance
    ("dynamic").
    """

    quad_weights: np.ndarray
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    scores: np.ndarray
    kind: str = "static"

    def __post_init__(self):
        w = np.array(self.quad_weights, dtype=float, copy=True)
        mean = np.asarray(self.mean, dtype=float)
        vals = np.asarray(self.eigenvalues, dtype=float)
        funcs = np.asarray(self.eigenfunctions, dtype=float)
        scores = np.asarray(self.scores, dtype=float)
        if self.kind not in ("static", "dynamic"):
            raise ValueError("kind must be 'static' or 'dynamic'")
        if w.ndim != 1 or np.any(w <= 0):
            raise ValueError("quad_weights must be a positive vector")
        if mean.shape != w.shape:
            raise ValueError("mean curve/weights mismatch")
        if funcs.shape != (len(vals), len(w)):
            raise ValueError("eigenfunction matrix shape mismatch")
        if scores.ndim != 2 or scores.shape[1] != len(vals):
            raise ValueError("score matrix shape mismatch")
        if np.any(np.diff(vals) > 1e-12):
            raise ValueError("eigenvalues must be non-increasing")
        if np.any(vals < -1e-10):
            raise ValueError("eigenvalues must be >= -1e-10")
        if len(vals):
            gram = (funcs * w) @ funcs.T
            if np.max(np.abs(gram - np.eye(len(vals)))) > 1e-8:
                raise ValueError("eigenfunctions are not orthonormal under "
                                 "the quadrature weights")
            if self.kind == "static" and scores.shape[0] > 0:
                tol = 1e-8 * max(1.0, float(np.max(np.abs(scores))))
                if np.max(np.abs(scores.mean(axis=0))) > tol:
                    raise ValueError("static scores must have zero sample mean")
        for arr in (w, mean, vals, funcs, scores):
            arr.setflags(write=False)
        object.__setattr__(self, "quad_weights", w)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenfunctions", funcs)
        object.__setattr__(self, "scores", scores)

    @property
    def n_components(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self, scores: np.ndarray | None = None) -> np.ndarray:
        """Curves implied by ``scores`` (default: the fitted scores)."""
        if scores is None:
            scores = self.scores
        scores = np.atleast_2d(np.asarray(scores, dtype=float))
        return self.mean + scores @ self.eigenfunctions


def sample_covariance(panel: CurvePanel) -> np.ndarray:
    """Lag-0 covariance surface with divisor 1/n.

    The 1/n normalisation matches the autocovariance estimator used by
    the long-run covariance, keeping static and dynamic paths on the
    same scale.
    """
    return covariance_matrix(panel.values)


def covariance_matrix(values: np.ndarray) -> np.ndarray:
    """``sample_covariance`` on a raw n x R matrix."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise ValueError("insufficient observations")
    z = values - values.mean(axis=0)
    return z.T @ z / n


def eigen_weighted(cov: np.ndarray, quad_w: np.ndarray):
    """Eigenpairs of a covariance surface under given quadrature weights.

    Returns eigenvalues sorted non-increasing (below-tolerance entries
    clamped to zero) and eigenfunctions, one per row, orthonormal under
    the weights.  Each eigenfunction is scaled so its entry of largest
    magnitude is positive, which fixes the sign indeterminacy.
    """
    cov = np.asarray(cov, dtype=float)
    quad_w = np.asarray(quad_w, dtype=float)
    r = len(quad_w)
    if cov.shape != (r, r):
        raise ValueError("covariance/weights dimension mismatch")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
        raise ValueError("covariance surface is not symmetric")
    sw = np.sqrt(quad_w)
    b = sw[:, None] * cov * sw[None, :]
    b = (b + b.T) / 2.0
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    funcs = (vecs[:, order] / sw[:, None]).T
    lead = vals[0] if len(vals) else 0.0
    vals = np.where(np.abs(vals) <= ZERO_EIGENVALUE_REL_TOL * max(lead, 0.0),
                    0.0, vals)
    for k in range(funcs.shape[0]):
        j = int(np.argmax(np.abs(funcs[k])))
        if funcs[k, j] < 0:
            funcs[k] = -funcs[k]
    return vals, funcs


def eigendecompose(cov: np.ndarray, grid: DeltaGrid):
    """``eigen_weighted`` against a delta grid's trapezoid weights."""
    return eigen_weighted(cov, grid.quadrature_weights)


def select_k_cpv(eigenvalues: np.ndarray, threshold: float) -> int:
    """Smallest K whose leading eigenvalue share reaches ``threshold``.

    Zero (and below-tolerance) eigenvalues are excluded from the
    denominator.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    vals = np.asarray(eigenvalues, dtype=float)
    if len(vals) == 0 or np.any(np.diff(vals) > 1e-12):
        raise ValueError("eigenvalues must be a non-increasing vector")
    positive = vals > ZERO_EIGENVALUE_REL_TOL * max(float(vals[0]), 0.0)
    total = vals[positive].sum()
    if total <= 0.0:
        raise ValueError("degenerate covariance")
    share = np.cumsum(vals) / total
    return int(np.searchsorted(share, threshold - 1e-12) + 1)


def rank_positive(eigenvalues: np.ndarray) -> int:
    """Number of eigenvalues above the zero tolerance."""
    vals = np.asarray(eigenvalues, dtype=float)
    if len(vals) == 0:
        return 0
    return int(np.sum(vals > ZERO_EIGENVALUE_REL_TOL * max(float(vals[0]), 0.0)))


def resolve_k(eigenvalues: np.ndarray, k_rule, cap: int | None = None) -> int:
    """Component count for a CPV or Fixed rule, optionally capped."""
    if isinstance(k_rule, CPV):
        k = select_k_cpv(eigenvalues, k_rule.threshold)
    elif isinstance(k_rule, Fixed):
        k = k_rule.k
    else:
        raise TypeError(f"unknown component rule: {k_rule!r}")
    if cap is not None:
        k = min(k, cap)
    return min(k, len(eigenvalues))


def basis_from_covariance(values: np.ndarray, quad_w: np.ndarray,
                          cov: np.ndarray, k_rule, kind: str,
                          cap_rank: bool = False) -> FpcaBasis:
    """Shared eigen/score path for the static and dynamic fits.

    Static and dynamic FPCA differ only in the covariance surface they
    decompose; routing both through this function guarantees they are
    bit-identical whenever the surfaces are.  With ``cap_rank`` a Fixed
    component count is capped at the surface's numerical rank (used by
    the stacked multivariate fit).
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    vals, funcs = eigen_weighted(cov, quad_w)
    k = resolve_k(vals, k_rule, cap=rank_positive(vals) if cap_rank else None)
    if k >= n:
        raise ValueError(f"retained components K={k} must be < n={n}")
    vals = vals[:k]
    funcs = funcs[:k]
    mean = values.mean(axis=0)
    scores = (values - mean) @ (np.asarray(quad_w, dtype=float)[:, None]
                                * funcs.T)
    return FpcaBasis(quad_w, mean, vals, funcs, scores, kind=kind)


def fit_static_fpca(panel: CurvePanel, k_rule) -> FpcaBasis:
    """FPCA of the lag-0 covariance with CPV or fixed component count."""
    cov = sample_covariance(panel)
    return basis_from_covariance(panel.values, panel.grid.quadrature_weights,
                                 cov, k_rule, kind="static")
