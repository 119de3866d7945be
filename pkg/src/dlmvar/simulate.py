"""Synthetic series from the locally linear DLM and Monte Carlo checks.

Random numbers come from the Philox4x64-10 counter-based generator as shipped
with numpy (``numpy.random.Philox``), keyed by the 128-bit pair
``(seed, stream)``.  A single simulated series uses ``stream = 0``; Monte Carlo
replicate ``r`` uses ``stream = r + 1``, so every replicate is reproducible on
its own and independent of how replicates are scheduled.

Within a stream, draws happen in a fixed order:

1. the variance components ``V`` (hierarchical mode only): one gamma draw per
   component with positive prior variance, matched to its mean and variance;
2. ``M_1`` then ``N_1`` (standard normals, scaled);
3. innovations, component-major: for each ``j = 1, 2, 3`` a block of ``T``
   draws (gaussian family: standard normals; chi-square family: ``T`` gamma
   draws then ``T`` random signs).

Component ``j`` at time ``t`` is ``Y_jt = sqrt(V_j) * W_jt`` with
``E[W^2] = 1``.  The gaussian family implies ``Var(S_j) = 2 E[V_j^2]``.  The
``chi2`` family draws ``W^2`` from a gamma law with shape
``k = E[V_j^2] / Var(S_j)`` so that the prior's ``Var(S_j)`` is matched
exactly; ``k = 1/2`` recovers the gaussian case.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import MIN_LENGTH, ObservedSeries, PriorSpec, QuadraticLayout, build_quadratic_vector, difference_series

FAMILIES = ("gaussian", "chi2")
_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SimConfig:
    spec: PriorSpec
    T: int
    seed: int = 0
    family: str = "gaussian"
    hierarchical: bool = False

    def __post_init__(self):
        if self.T < MIN_LENGTH:
            raise ValueError(f"T must be at least {MIN_LENGTH}, got {self.T}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")


def draw_variances(rng: np.random.Generator, spec: PriorSpec) -> np.ndarray:
    """Gamma draws with the prior mean and variance; degenerate components stay at the mean."""
    v = np.array(spec.mean_V, dtype=float)
    for j in range(3):
        m, s2 = spec.mean_V[j], spec.var_V[j]
        if m > 0 and s2 > 0:
            v[j] = rng.gamma(m * m / s2, s2 / m)
    return v


def _second_moment(spec: PriorSpec, hierarchical: bool) -> np.ndarray:
    m = np.array(spec.mean_V)
    return m * m + (np.array(spec.var_V) if hierarchical else 0.0)


def draw_innovations(
    rng: np.random.Generator,
    spec: PriorSpec,
    v: np.ndarray,
    T: int,
    family: str = "gaussian",
    hierarchical: bool = False,
) -> np.ndarray:
    """Innovations as a (3, T) array; column ``t - 1`` holds time ``t``."""
    w = np.empty((3, T))
    if family == "gaussian":
        for j in range(3):
            w[j] = rng.standard_normal(T)
    elif family == "chi2":
        ev2 = _second_moment(spec, hierarchical)
        for j in range(3):
            var_s = spec.var_S[j]
            if var_s > 0 and ev2[j] > 0:
                k = ev2[j] / var_s
                sq = rng.gamma(k, 1.0 / k, T)
            else:
                sq = np.ones(T)
            sign = rng.integers(0, 2, T) * 2 - 1
            w[j] = sign * np.sqrt(sq)
    else:
        raise ValueError(f"unknown innovation family {family!r}")
    return np.sqrt(np.asarray(v, dtype=float))[:, None] * w


def _path(rng: np.random.Generator, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    spec = cfg.spec
    v = draw_variances(rng, spec) if cfg.hierarchical else np.array(spec.mean_V)
    m1 = spec.mean_M1 + np.sqrt(spec.var_M1) * rng.standard_normal()
    n1 = spec.mean_N1 + np.sqrt(spec.var_N1) * rng.standard_normal()
    y = draw_innovations(rng, spec, v, cfg.T, cfg.family, cfg.hierarchical)
    # N_t = N_{t-1} + Y3_t and M_t = M_{t-1} + N_t + Y2_t for t >= 2
    trend = n1 + np.concatenate(([0.0], np.cumsum(y[2, 1:])))
    level = m1 + np.concatenate(([0.0], np.cumsum(trend[1:] + y[1, 1:])))
    return level + y[0], v


def simulate_series(cfg: SimConfig, stream: int = 0) -> ObservedSeries:
    """One realisation ``X_1..X_T``; identical config and stream give identical output."""
    x, _ = _path(make_rng(cfg.seed, stream), cfg)
    return ObservedSeries(x)


def simulate_quadratic(cfg: SimConfig, N: int, replicates: int, first_stream: int = 1) -> np.ndarray:
    """Stacked quadratic vectors from independent replicates, shape (replicates, 3N-9)."""
    if N > cfg.T:
        raise ValueError("N cannot exceed T")
    layout = QuadraticLayout(N)
    out = np.empty((replicates, layout.size))
    for r in range(replicates):
        x, _ = _path(make_rng(cfg.seed, first_stream + r), cfg)
        out[r] = build_quadratic_vector(difference_series(x), N).d
    return out


@dataclass(frozen=True)
class MCCheck:
    max_discrepancy: float
    max_mean_discrepancy: float
    max_cov_discrepancy: float
    worst_entry: tuple[int, int] | None
    sample_mean: np.ndarray
    sample_cov: np.ndarray
    replicates: int


def _standardize(diff: np.ndarray, se: np.ndarray) -> np.ndarray:
    z = np.zeros_like(diff)
    pos = se > 0
    z[pos] = diff[pos] / se[pos]
    # a deterministic entry must match exactly up to rounding
    tight = ~pos & (np.abs(diff) > 1e-9 * (1.0 + np.abs(diff)))
    z[tight] = np.inf
    return z


def mc_check_var_D(
    spec: PriorSpec,
    N: int,
    replicates: int = 100_000,
    seed: int = 0,
    family: str = "chi2",
    prior=None,
) -> MCCheck:
    """Worst standardized gap between simulated and assembled moments of D.

    Variance components are redrawn per replicate so that the assembled
    covariance, which includes the Var(V) terms, is the right target.
    """
    from .covariance import build_prior_structure

    if replicates < 2:
        raise ValueError("need at least two replicates")
    prior = prior or build_prior_structure(spec, N)
    cfg = SimConfig(spec, T=N, seed=seed, family=family, hierarchical=True)
    d = simulate_quadratic(cfg, N, replicates)
    R = replicates
    mean = d.mean(axis=0)
    mean_se = d.std(axis=0, ddof=1) / np.sqrt(R)
    z_mean = _standardize(mean - prior.mean_D, mean_se)

    dc = d - mean
    m = d.shape[1]
    cov = np.empty((m, m))
    z_cov = np.zeros((m, m))
    for i in range(m):
        prod = dc[:, i:i + 1] * dc[:, i:]
        cov_row = prod.sum(axis=0) / (R - 1)
        se = prod.std(axis=0, ddof=1) / np.sqrt(R)
        cov[i, i:] = cov_row
        cov[i:, i] = cov_row
        z_cov[i, i:] = _standardize(cov_row - prior.var_D[i, i:], se)
    abs_cov = np.abs(z_cov)
    worst = np.unravel_index(np.argmax(abs_cov), abs_cov.shape)
    max_mean = float(np.abs(z_mean).max())
    max_cov = float(abs_cov.max())
    return MCCheck(
        max_discrepancy=max(max_mean, max_cov),
        max_mean_discrepancy=max_mean,
        max_cov_discrepancy=max_cov,
        worst_entry=(int(worst[0]), int(worst[1])),
        sample_mean=mean,
        sample_cov=cov,
        replicates=R,
    )


@dataclass(frozen=True)
class CalibrationResult:
    covered: np.ndarray
    replicates: int
    monotone_resolution: np.ndarray
    N_grid: tuple[int, ...]
    final_means: np.ndarray

    @property
    def coverage_counts(self) -> np.ndarray:
        return self.covered.sum(axis=0)


def calibration_run(
    spec: PriorSpec,
    T: int = 200,
    replicates: int = 100,
    seed: int = 0,
    N_grid: Sequence[int] = (50, 100, 150, 200),
    family: str = "gaussian",
    rel_tol: float = 1e-10,
    tol: float = 1e-8,
) -> CalibrationResult:
    """Coverage of the 2-sd adjusted bounds for the true ``mean_V`` over replicate series.

    Data are simulated with variances fixed at ``spec.mean_V``; beliefs are
    adjusted on the full series, and resolution monotonicity is checked over
    ``N_grid`` for every replicate.
    """
    from .adjust import adjustment_operator, apply_adjustment
    from .covariance import build_prior_structure

    grid = tuple(int(n) for n in N_grid)
    if grid[-1] > T:
        raise ValueError("N_grid exceeds T")
    ops = {N: adjustment_operator(build_prior_structure(spec, N), rel_tol) for N in set(grid) | {T}}
    truth = np.array(spec.mean_V)
    cfg = SimConfig(spec, T=T, seed=seed, family=family)
    covered = np.zeros((replicates, 3), dtype=bool)
    monotone = np.zeros(replicates, dtype=bool)
    finals = np.empty((replicates, 3))
    for r in range(replicates):
        diff = difference_series(simulate_series(cfg, stream=r + 1))
        res = {N: apply_adjustment(ops[N], build_quadratic_vector(diff, N)) for N in ops}
        final = res[T]
        covered[r] = (final.lower <= truth) & (truth <= final.upper)
        finals[r] = final.adjusted_mean
        resol = np.array([res[N].resolution for N in grid])
        monotone[r] = bool(np.all(np.diff(resol, axis=0) >= -tol))
    return CalibrationResult(covered, replicates, monotone, grid, finals)

