"""Bayes linear adjustment of the variance components on the quadratic observables."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .covariance import PriorStructure
from .model import (
    MIN_LENGTH,
    SERIES_START,
    DifferencedSeries,
    ObservedSeries,
    QuadraticVector,
    SeriesLengthError,
    build_quadratic_vector,
    difference_series,
)

log = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-10
DIAGNOSTIC_THRESHOLD = 2.0

# Rows: V1, V2, V3; columns: weights on (x1^2, x2^2, x3^2).
UNBIASED_WEIGHTS = np.array(
    [
        [0.5, -1.0, 0.5],
        [-1.0, 3.5, -2.0],
        [0.0, -1.0, 1.0],
    ]
)


def pseudo_inverse(m: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> tuple[np.ndarray, int]:
    """Moore-Penrose inverse of a symmetric matrix via the SVD.

    Singular values below ``rel_tol`` times the largest are treated as zero.
    Returns the inverse and the number of singular values kept.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = np.abs(m).max() if m.size else 0.0
    if scale and np.abs(m - m.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    if m.size == 0 or scale == 0.0:
        return np.zeros_like(m.T), 0
    u, s, vt = np.linalg.svd(m)
    keep = s > rel_tol * s[0]
    rank = int(keep.sum())
    inv = (vt[:rank].T / s[:rank]) @ u[:, :rank].T
    return inv, rank


def penrose_residuals(a: np.ndarray, a_pinv: np.ndarray) -> tuple[float, float, float, float]:
    """Relative residuals of the four Penrose conditions (Frobenius norms)."""
    def rel(x, ref):
        n = np.linalg.norm(ref)
        return float(np.linalg.norm(x) / n) if n else float(np.linalg.norm(x))

    aa = a @ a_pinv
    pa = a_pinv @ a
    return (
        rel(aa @ a - a, a),
        rel(pa @ a_pinv - a_pinv, a_pinv),
        rel(aa - aa.T, aa),
        rel(pa - pa.T, pa),
    )


@dataclass(frozen=True)
class AdjustmentOperator:
    """The data-independent part of an adjustment at a fixed horizon."""

    prior: PriorStructure
    gain: np.ndarray
    adjusted_var: np.ndarray
    rank: int
    rel_tol: float
    min_eigenvalue: float


def adjustment_operator(prior: PriorStructure, rel_tol: float = DEFAULT_REL_TOL) -> AdjustmentOperator:
    var_d_pinv, rank = pseudo_inverse(prior.var_D, rel_tol)
    gain = prior.cov_V_D @ var_d_pinv
    adj_var = prior.var_V - gain @ prior.cov_V_D.T
    adj_var = 0.5 * (adj_var + adj_var.T)
    return AdjustmentOperator(prior, gain, adj_var, rank, rel_tol, prior.min_eigenvalue())


@dataclass(frozen=True)
class AdjustmentResult:
    N: int
    prior_mean: np.ndarray
    prior_var: np.ndarray
    adjusted_mean: np.ndarray
    adjusted_var: np.ndarray
    resolution: np.ndarray
    diagnostics: np.ndarray
    rank_used: int
    min_eigenvalue: float

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.adjusted_var), 0.0, None))

    @property
    def lower(self) -> np.ndarray:
        return self.adjusted_mean - 2 * self.sd

    @property
    def upper(self) -> np.ndarray:
        return self.adjusted_mean + 2 * self.sd

    @property
    def flagged(self) -> np.ndarray:
        return np.abs(self.diagnostics) > DIAGNOSTIC_THRESHOLD

    @property
    def negative_mean(self) -> np.ndarray:
        return self.adjusted_mean < 0

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "prior_mean": self.prior_mean.tolist(),
            "prior_var": np.diag(self.prior_var).tolist(),
            "adjusted_mean": self.adjusted_mean.tolist(),
            "adjusted_var": self.adjusted_var.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "resolution": self.resolution.tolist(),
            "diagnostics": self.diagnostics.tolist(),
            "diagnostic_flag": self.flagged.tolist(),
            "negative_mean_flag": self.negative_mean.tolist(),
            "rank_used": self.rank_used,
            "var_D_min_eigenvalue": self.min_eigenvalue,
        }


def _standardized_change(change: np.ndarray, resolved: np.ndarray) -> np.ndarray:
    out = np.zeros_like(change)
    for i, (c, r) in enumerate(zip(change, resolved)):
        if r > 0:
            out[i] = c / np.sqrt(r)
        elif c != 0:
            out[i] = np.copysign(np.inf, c)
    return out


def apply_adjustment(op: AdjustmentOperator, d_obs: QuadraticVector) -> AdjustmentResult:
    prior = op.prior
    d = d_obs.d if isinstance(d_obs, QuadraticVector) else np.asarray(d_obs, dtype=float)
    if d.shape != prior.mean_D.shape:
        raise ValueError(
            f"observation vector has length {d.shape[0]}, prior structure expects {prior.mean_D.size}"
        )
    innovation = d - prior.mean_D
    change = op.gain @ innovation
    adj_mean = prior.mean_V + change
    prior_var = np.diag(prior.var_V)
    adj_diag = np.diag(op.adjusted_var)
    resolved = prior_var - adj_diag
    with np.errstate(divide="ignore", invalid="ignore"):
        resolution = np.where(prior_var > 0, resolved / np.where(prior_var > 0, prior_var, 1.0), 0.0)
    diagnostics = _standardized_change(change, resolved)
    result = AdjustmentResult(
        N=prior.N,
        prior_mean=prior.mean_V.copy(),
        prior_var=prior.var_V.copy(),
        adjusted_mean=adj_mean,
        adjusted_var=op.adjusted_var,
        resolution=resolution,
        diagnostics=diagnostics,
        rank_used=op.rank,
        min_eigenvalue=op.min_eigenvalue,
    )
    if result.negative_mean.any():
        log.debug("adjusted expectation negative for V%s at N=%d",
                    ",".join(str(i + 1) for i in np.nonzero(result.negative_mean)[0]), prior.N)
    return result


def adjust_variances(
    prior: PriorStructure, d_obs: QuadraticVector, rel_tol: float = DEFAULT_REL_TOL
) -> AdjustmentResult:
    """Adjusted expectation and variance of V given the observed quadratic vector."""
    if isinstance(d_obs, QuadraticVector) and d_obs.N != prior.N:
        raise ValueError(f"observation horizon N={d_obs.N} does not match prior N={prior.N}")
    return apply_adjustment(adjustment_operator(prior, rel_tol), d_obs)


def sequential_adjustments(
    prior_builder: Callable[[int], PriorStructure],
    series: ObservedSeries | DifferencedSeries,
    N_grid: Sequence[int],
    rel_tol: float = DEFAULT_REL_TOL,
    workers: int = 1,
) -> list[tuple[int, AdjustmentResult]]:
    """Full adjustment at every horizon in ``N_grid`` using observations 1..N only."""
    grid = [int(n) for n in N_grid]
    if not grid:
        raise ValueError("N_grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("N_grid must be strictly increasing")
    if grid[0] < MIN_LENGTH:
        raise SeriesLengthError(f"every N must be at least {MIN_LENGTH}")
    diff = series if isinstance(series, DifferencedSeries) else difference_series(series)

    def one(N: int) -> tuple[int, AdjustmentResult]:
        return N, adjust_variances(prior_builder(N), build_quadratic_vector(diff, N), rel_tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, grid))
    return [one(N) for N in grid]


@dataclass(frozen=True)
class UnbiasedEstimates:
    """Running means of the per-time identifying combinations, t = 5..N."""

    times: np.ndarray
    combos: np.ndarray
    running: np.ndarray

    @property
    def estimates(self) -> np.ndarray:
        return self.running[-1]


def unbiased_estimates(diff: DifferencedSeries, N: int | None = None) -> UnbiasedEstimates:
    """Sample-mean estimators of (v1, v2, v3) from the squared observables."""
    if N is None:
        N = diff.T
    if not MIN_LENGTH <= N <= diff.T:
        raise SeriesLengthError(f"N must lie in [{MIN_LENGTH}, {diff.T}], got {N}")
    t0 = SERIES_START[3]
    sq = np.column_stack(
        [diff.series(k)[t0 - SERIES_START[k]: N - SERIES_START[k] + 1] ** 2 for k in (1, 2, 3)]
    )
    combos = sq @ UNBIASED_WEIGHTS.T
    running = np.cumsum(combos, axis=0) / np.arange(1, combos.shape[0] + 1)[:, None]
    return UnbiasedEstimates(np.arange(t0, N + 1), combos, running)
