"""Domain types for the locally linear DLM and its differenced observables.

Times are 1-based throughout: ``X_1`` is the first observation, the second
differences start at ``t = 3``, the two- and three-step series at ``t = 4``
and ``t = 5``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MIN_LENGTH = 5

# Series id -> first time index at which the series exists.
SERIES_START = {1: 3, 2: 4, 3: 5}

# Coefficients on (X_t, X_{t-1}, ..., X_{t-k}) for each differenced series.
STENCILS = {
    1: np.array([1.0, -2.0, 1.0]),
    2: np.array([1.0, -1.0, -1.0, 1.0]),
    3: np.array([1.0, -1.0, 0.0, -1.0, 1.0]),
}


class SeriesLengthError(ValueError):
    """Raised when a series is too short to form the differenced observables."""


def _as_triple(x, name: str) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in x)
    if len(vals) != 3:
        raise ValueError(f"{name} must have exactly 3 components, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"{name} must be finite")
    return vals


@dataclass(frozen=True)
class PriorSpec:
    """A-priori first and second moments for the DLM and its variance components.

    ``mean_V`` doubles as the innovation variances ``(v1, v2, v3)``.  Zero
    means are accepted so that degenerate simulations can be described;
    operations that genuinely need positive variances check
    :meth:`require_positive_means` themselves.
    """

    mean_M1: float
    var_M1: float
    mean_N1: float
    var_N1: float
    mean_V: tuple[float, float, float]
    var_V: tuple[float, float, float]
    var_S: tuple[float, float, float]

    def __post_init__(self):
        for name in ("mean_V", "var_V", "var_S"):
            object.__setattr__(self, name, _as_triple(getattr(self, name), name))
        for name in ("mean_M1", "var_M1", "mean_N1", "var_N1"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if self.var_M1 < 0 or self.var_N1 < 0:
            raise ValueError("var_M1 and var_N1 must be non-negative")
        if min(self.mean_V) < 0:
            raise ValueError("mean_V components must be non-negative")
        if min(self.var_V) < 0 or min(self.var_S) < 0:
            raise ValueError("var_V and var_S components must be non-negative")

    def require_positive_means(self) -> None:
        if min(self.mean_V) <= 0:
            raise ValueError(f"mean_V must be strictly positive, got {self.mean_V}")

    def scaled(self, c: float) -> "PriorSpec":
        """Prior for data multiplied by ``c`` (levels scale by c, variances by c**2)."""
        c2, c4 = c * c, c ** 4
        return PriorSpec(
            mean_M1=self.mean_M1 * c,
            var_M1=self.var_M1 * c2,
            mean_N1=self.mean_N1 * c,
            var_N1=self.var_N1 * c2,
            mean_V=tuple(v * c2 for v in self.mean_V),
            var_V=tuple(v * c4 for v in self.var_V),
            var_S=tuple(v * c4 for v in self.var_S),
        )

    def to_dict(self) -> dict:
        return {
            "mean_M1": self.mean_M1,
            "var_M1": self.var_M1,
            "mean_N1": self.mean_N1,
            "var_N1": self.var_N1,
            "mean_V": list(self.mean_V),
            "var_V": list(self.var_V),
            "var_S": list(self.var_S),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def example_prior() -> PriorSpec:
    """Worked example prior: level 20 +/- 20, trend 0 +/- 3, v = (5^2, 0.2^2, 0.1^2)."""
    return PriorSpec(
        mean_M1=20.0,
        var_M1=20.0 ** 2,
        mean_N1=0.0,
        var_N1=3.0 ** 2,
        mean_V=(5.0 ** 2, 0.2 ** 2, 0.1 ** 2),
        var_V=(5.0 ** 2, 1.0 ** 2, 0.2 ** 2),
        var_S=(2 * 5.0 ** 4, 2 * 0.2 ** 4, 2 * 0.1 ** 4),
    )


@dataclass(frozen=True)
class ObservedSeries:
    """Observations ``X_1 .. X_T``; ``labels`` carries an optional external time column."""

    values: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("series values must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValueError("series contains missing or non-finite values")
        if vals.size < MIN_LENGTH:
            raise SeriesLengthError(
                f"series has {vals.size} observations; minimum {MIN_LENGTH} observations required"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != vals.size:
                raise ValueError("labels must match the number of observations")
            object.__setattr__(self, "labels", labels)

    @property
    def T(self) -> int:
        return int(self.values.size)

    def head(self, n: int) -> "ObservedSeries":
        labels = None if self.labels is None else self.labels[:n]
        return ObservedSeries(self.values[:n], labels)

    def label(self, t: int):
        """External label for 1-based time ``t`` (defaults to ``t`` itself)."""
        return t if self.labels is None else self.labels[t - 1]


@dataclass(frozen=True)
class DifferencedSeries:
    """The three linear observables, each stored from its first valid time."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    @property
    def T(self) -> int:
        return int(self.x1.size + 2)

    def series(self, k: int) -> np.ndarray:
        return (self.x1, self.x2, self.x3)[k - 1]

    def times(self, k: int) -> np.ndarray:
        return np.arange(SERIES_START[k], self.T + 1)

    def at(self, k: int, t: int) -> float:
        start = SERIES_START[k]
        if not start <= t <= self.T:
            raise IndexError(f"series {k} is defined for t in [{start}, {self.T}], got {t}")
        return float(self.series(k)[t - start])


def _apply_stencil(x: np.ndarray, stencil: np.ndarray) -> np.ndarray:
    k = stencil.size - 1
    out = np.zeros(x.size - k)
    for lag, c in enumerate(stencil):
        if c:
            out += c * x[k - lag: x.size - lag]
    return out


def difference_series(series: ObservedSeries | Sequence[float]) -> DifferencedSeries:
    """Second, two-step and three-step differences of the first differences."""
    if not isinstance(series, ObservedSeries):
        series = ObservedSeries(np.asarray(series, dtype=float))
    x = series.values
    return DifferencedSeries(*(_apply_stencil(x, STENCILS[k]) for k in (1, 2, 3)))


@dataclass(frozen=True)
class QuadraticLayout:
    """Index decoder for the stacked vector of squared observables at horizon N.

    Positions run over ``(1, 3..N)``, then ``(2, 4..N)``, then ``(3, 5..N)``.
    """

    N: int
    _offsets: tuple[int, int, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < MIN_LENGTH:
            raise SeriesLengthError(f"N must be at least {MIN_LENGTH}, got {self.N}")
        n1, n2 = self.N - 2, self.N - 3
        object.__setattr__(self, "_offsets", (0, n1, n1 + n2))

    @property
    def size(self) -> int:
        return 3 * self.N - 9

    def block_length(self, k: int) -> int:
        return self.N - SERIES_START[k] + 1

    def block(self, k: int) -> slice:
        off = self._offsets[k - 1]
        return slice(off, off + self.block_length(k))

    def encode(self, k: int, t: int) -> int:
        start = SERIES_START[k]
        if not start <= t <= self.N:
            raise IndexError(f"series {k} has no time {t} at N={self.N}")
        return self._offsets[k - 1] + t - start

    def decode(self, pos: int) -> tuple[int, int]:
        if not 0 <= pos < self.size:
            raise IndexError(f"position {pos} out of range for size {self.size}")
        for k in (3, 2, 1):
            if pos >= self._offsets[k - 1]:
                return k, pos - self._offsets[k - 1] + SERIES_START[k]
        raise AssertionError("unreachable")

    def series_ids(self) -> np.ndarray:
        return np.concatenate([np.full(self.block_length(k), k) for k in (1, 2, 3)])

    def time_ids(self) -> np.ndarray:
        return np.concatenate([np.arange(SERIES_START[k], self.N + 1) for k in (1, 2, 3)])


@dataclass(frozen=True)
class QuadraticVector:
    d: np.ndarray
    N: int

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        layout = QuadraticLayout(self.N)
        if d.shape != (layout.size,):
            raise ValueError(f"quadratic vector must have length {layout.size}, got {d.shape}")
        if np.any(d < 0):
            raise ValueError("quadratic observables must be non-negative")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def layout(self) -> QuadraticLayout:
        return QuadraticLayout(self.N)


def build_quadratic_vector(diff: DifferencedSeries, N: int | None = None) -> QuadraticVector:
    """Stack the squared observables available up to time N."""
    if N is None:
        N = diff.T
    if not MIN_LENGTH <= N <= diff.T:
        raise SeriesLengthError(f"N must lie in [{MIN_LENGTH}, {diff.T}], got {N}")
    parts = [diff.series(k)[: N - SERIES_START[k] + 1] ** 2 for k in (1, 2, 3)]
    return QuadraticVector(np.concatenate(parts), N)
