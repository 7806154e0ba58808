"""Statistical testing: model confidence sets and functional stationarity.

The model confidence set procedure runs the full elimination sequence
on a loss matrix, bootstrapping the variances of loss differentials
with a circular block bootstrap, and returns the set of models whose
running-maximum elimination p-value survives the confidence level.

The stationarity test projects centred curves on their leading
principal components and compares the maximal normalised CUSUM of the
score partial sums against a Monte Carlo null distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .evaluation import LossMatrix
from .fpca import covariance_matrix, eigen_weighted, select_k_cpv
from .panels import CurvePanel

__all__ = [
    "McsConfig",
    "McsResult",
    "mcs",
    "stationarity_test",
]


@dataclass(frozen=True)
class McsConfig:
    """Confidence level, bootstrap size and statistic for the MCS run."""

    alpha: float = 0.05
    n_bootstrap: int = 5000
    block_length: int | None = None  # None selects the AR-significance rule
    statistic: str = "T_max"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.n_bootstrap < 1:
            raise ValueError("n_bootstrap must be positive")
        if self.block_length is not None and self.block_length < 1:
            raise ValueError("block_length must be >= 1")
        if self.statistic not in ("T_max", "T_R"):
            raise ValueError("statistic must be 'T_max' or 'T_R'")


@dataclass(frozen=True)
class McsResult:
    """Superior set plus the full elimination trace with p-values."""

    superior_set: tuple
    elimination_order: tuple
    mcs_p_values: dict

    def __post_init__(self):
        if not self.superior_set:
            raise ValueError("superior set cannot be empty")
        ps = [p for _, p in self.elimination_order]
        if any(b < a - 1e-12 for a, b in zip(ps, ps[1:])):
            raise ValueError("elimination p-values must be non-decreasing")


def _auto_block_length(diffs: np.ndarray) -> int:
    """Max AR order with a significant last coefficient across series.

    Each loss-differential series is fit by least-squares AR(p) for
    p = 1..10; an order counts when |coef_p| / se > 1.96.  The block
    length is the largest such order over all series, floored at 1.
    """
    best = 1
    nobs, nser = diffs.shape
    for j in range(nser):
        x = diffs[:, j]
        if np.ptp(x) == 0.0:
            continue
        for p in range(1, 11):
            if nobs - p <= p + 2:
                break
            y = x[p:]
            cols = [np.ones(nobs - p)]
            cols += [x[p - i - 1:nobs - i - 1] for i in range(p)]
            xm = np.column_stack(cols)
            beta, *_ = np.linalg.lstsq(xm, y, rcond=None)
            resid = y - xm @ beta
            dof = len(y) - xm.shape[1]
            if dof <= 0:
                break
            s2 = float(resid @ resid) / dof
            xtx_inv = np.linalg.pinv(xm.T @ xm)
            se = math.sqrt(max(s2 * xtx_inv[-1, -1], 1e-300))
            if abs(beta[-1]) / se > 1.96 and p > best:
                best = p
    return best


def _block_bootstrap_indices(rng: np.random.Generator, n: int, n_boot: int,
                             block: int) -> np.ndarray:
    """Circular block bootstrap index matrix of shape (n_boot, n)."""
    n_blocks = -(-n // block)
    starts = rng.integers(0, n, size=(n_boot, n_blocks))
    offsets = np.arange(block)
    idx = (starts[:, :, None] + offsets[None, None, :]) % n
    return idx.reshape(n_boot, -1)[:, :n]


def mcs(losses: LossMatrix, cfg: McsConfig) -> McsResult:
    """Model confidence set by sequential elimination.

    The bootstrap index matrix is drawn once and reused across
    elimination rounds, which keeps the rounds' statistics nested and
    the run bit-reproducible for a given seed.  Pairs of models with a
    zero-variance loss differential are treated as tied: neither side
    of the pair can eliminate the other, and a fully tied set is
    returned whole with p-values of 1.
    """
    vals = losses.values
    n, m0 = vals.shape
    if m0 < 2:
        raise ValueError("need at least 2 models")
    if n < 20:
        raise ValueError("need at least 20 forecast origins")

    rng = np.random.default_rng(cfg.seed)
    if cfg.block_length is not None:
        block = int(cfg.block_length)
    else:
        iu = np.triu_indices(m0, 1)
        diffs = vals[:, iu[0]] - vals[:, iu[1]]
        block = _auto_block_length(diffs)
    idx = _block_bootstrap_indices(rng, n, cfg.n_bootstrap, block)
    boot_means = vals[idx, :].mean(axis=1)          # n_boot x m0
    col_means = vals.mean(axis=0)

    active = list(range(m0))
    raw_p: list = []
    eliminated: list = []

    while len(active) > 1:
        a = np.array(active)
        d = col_means[a][:, None] - col_means[a][None, :]
        db = boot_means[:, a][:, :, None] - boot_means[:, a][:, None, :]
        dev = db - d[None, :, :]
        var = np.mean(dev ** 2, axis=0)
        tied = var <= 0.0
        np.fill_diagonal(tied, True)
        if tied.all():
            break

        if cfg.statistic == "T_R":
            se = np.sqrt(np.where(tied, 1.0, var))
            tmat = np.where(tied, 0.0, d / se)
            stat = float(np.max(np.abs(tmat)))
            tboot = np.where(tied[None, :, :], 0.0, dev / se[None, :, :])
            stat_boot = np.max(np.abs(tboot), axis=(1, 2))
            kill_scores = np.where(tied, -np.inf, tmat).max(axis=1)
        else:
            mm = len(a)
            drho = d.mean(axis=1)
            dbrho = db.mean(axis=2)
            vrho = np.mean((dbrho - drho[None, :]) ** 2, axis=0)
            if np.all(vrho <= 0.0):
                break
            se = np.sqrt(np.where(vrho <= 0.0, 1.0, vrho))
            trho = np.where(vrho <= 0.0, 0.0, drho / se)
            stat = float(np.max(trho))
            stat_boot = np.max((dbrho - drho[None, :]) / se[None, :], axis=1)
            kill_scores = trho
        p_val = float(np.mean(stat_boot >= stat))
        kill_pos = int(np.argmax(kill_scores))
        raw_p.append(p_val)
        eliminated.append(active[kill_pos])
        active.pop(kill_pos)

    running = np.maximum.accumulate(raw_p) if raw_p else np.empty(0)
    ids = losses.model_ids
    p_values = {mid: 1.0 for mid in ids}
    order = []
    for model_idx, p_adj in zip(eliminated, running):
        p_values[ids[model_idx]] = float(p_adj)
        order.append((ids[model_idx], float(p_adj)))
    superior = tuple(mid for mid in ids if p_values[mid] >= cfg.alpha)
    return McsResult(superior_set=superior, elimination_order=tuple(order),
                     mcs_p_values=p_values)


def _bartlett_lrv(x: np.ndarray, bw: int) -> float:
    e = x - x.mean()
    lrv = float(np.mean(e * e))
    for lag in range(1, min(bw, len(x) - 1) + 1):
        lrv += 2.0 * (1.0 - lag / (bw + 1.0)) * float(np.mean(e[:-lag]
                                                              * e[lag:]))
    return lrv


def _cusum_stat(score_cols: np.ndarray, bw: int) -> float:
    """Max over time of the variance-normalised squared bridge sum."""
    n, d = score_cols.shape
    u = np.arange(1, n + 1) / n
    total = np.zeros(n)
    for k in range(d):
        x = score_cols[:, k] - score_cols[:, k].mean()
        lrv = _bartlett_lrv(x, bw)
        if lrv <= 0.0:
            continue
        s = np.cumsum(x) / math.sqrt(n)
        bridge = s - u * s[-1]
        total += bridge * bridge / lrv
    return float(np.max(total))


@lru_cache(maxsize=32)
def _cusum_null(n: int, d: int, bw: int, n_mc: int, seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    return tuple(_cusum_stat(rng.standard_normal((n, d)), bw)
                 for _ in range(n_mc))


def stationarity_test(panel: CurvePanel, n_mc: int = 1000,
                      seed: int = 0) -> float:
    """p-value of a projection-based CUSUM test of stationarity.

    Centred curves are projected on the leading static components
    explaining 90% of variance; each score series' partial-sum bridge
    is normalised by its Bartlett long-run variance (bandwidth
    floor(4 (n/100)^{1/4})) and the maximal summed square is compared
    against Monte Carlo draws of the same studentised functional under
    an iid Gaussian null.  Small p-values indicate nonstationarity.
    """
    n = panel.n
    if n < 50:
        raise ValueError(f"need at least 50 observations, got {n}")
    quad_w = panel.grid.quadrature_weights
    cov = covariance_matrix(panel.values)
    vals, funcs = eigen_weighted(cov, quad_w)
    d = select_k_cpv(vals, 0.90)
    centred = panel.values - panel.values.mean(axis=0)
    scores = centred @ (quad_w[:, None] * funcs[:d].T)
    bw = int(math.floor(4.0 * (n / 100.0) ** 0.25))
    stat = _cusum_stat(scores, bw)
    null = np.asarray(_cusum_null(n, d, bw, n_mc, seed))
    return float(np.mean(null >= stat))
