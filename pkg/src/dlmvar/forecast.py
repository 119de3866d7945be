"""Second-order sequential updating of level and trend, with one-step forecasts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ObservedSeries, PriorSpec

G = np.array([[1.0, 1.0], [0.0, 1.0]])
F = np.array([1.0, 0.0])
DEFAULT_BURN_IN = 10


@dataclass(frozen=True)
class StateBelief:
    mean: np.ndarray
    cov: np.ndarray

    def check(self, tol: float = 1e-10) -> None:
        if np.abs(self.cov - self.cov.T).max() > tol * max(1.0, np.abs(self.cov).max()):
            raise ArithmeticError("state covariance lost symmetry")
        if np.linalg.eigvalsh(self.cov)[0] < -tol * max(1.0, np.abs(self.cov).max()):
            raise ArithmeticError("state covariance is not positive semi-definite")


@dataclass(frozen=True)
class ForecastStep:
    t: int
    forecast_mean: float
    forecast_var: float
    lower: float
    upper: float
    observed: float
    inside: bool
    level: float
    trend: float


@dataclass(frozen=True)
class ForecastResult:
    steps: list[ForecastStep]
    burn_in: int
    variances: tuple[float, float, float]

    @property
    def coverage(self) -> float:
        scored = self.steps[self.burn_in:]
        if not scored:
            return float("nan")
        return sum(s.inside for s in scored) / len(scored)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps])


def evolution_covariance(v2: float, v3: float) -> np.ndarray:
    """Covariance of the state noise when the trend is evolved before the level."""
    return np.array([[v2 + v3, v3], [v3, v3]])


def _update(a: np.ndarray, R: np.ndarray, x: float, v1: float, joseph: bool):
    q = float(F @ R @ F) + v1
    k = R @ F / q
    e = x - float(F @ a)
    m = a + k * e
    if joseph:
        i_kf = np.eye(2) - np.outer(k, F)
        C = i_kf @ R @ i_kf.T + v1 * np.outer(k, k)
    else:
        C = R - q * np.outer(k, k)
    return m, 0.5 * (C + C.T)


def forecast_series(
    spec: PriorSpec,
    variances,
    series: ObservedSeries,
    burn_in: int = DEFAULT_BURN_IN,
    joseph: bool = False,
) -> ForecastResult:
    """One-step-ahead forecasts with 2-sd intervals under the given (v1, v2, v3).

    The first observation updates the (M_1, N_1) prior directly; every later
    step evolves the state before forecasting.
    """
    v1, v2, v3 = (float(v) for v in variances)
    if min(v1, v2, v3) <= 0:
        raise ValueError(f"forecast variances must be strictly positive, got {(v1, v2, v3)}")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    W = evolution_covariance(v2, v3)
    m = np.array([spec.mean_M1, spec.mean_N1])
    C = np.diag([spec.var_M1, spec.var_N1])
    steps = []
    for idx, x in enumerate(series.values):
        t = idx + 1
        if t == 1:
            a, R = m, C
        else:
            a, R = G @ m, G @ C @ G.T + W
        f = float(F @ a)
        q = float(F @ R @ F) + v1
        half = 2.0 * np.sqrt(q)
        m, C = _update(a, R, float(x), v1, joseph)
        StateBelief(m, C).check()
        steps.append(
            ForecastStep(
                t=t,
                forecast_mean=f,
                forecast_var=q,
                lower=f - half,
                upper=f + half,
                observed=float(x),
                inside=bool(f - half <= x <= f + half),
                level=float(m[0]),
                trend=float(m[1]),
            )
        )
    return ForecastResult(steps, burn_in, (v1, v2, v3))
