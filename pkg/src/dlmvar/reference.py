"""Tabulated covariance formulas, loaded as data, and their symbolic re-derivation.

The table lives in ``data/covariance_table.json``.  Each case gives
``Cov(X(a)_t^2, X(b)_{t+lag}^2)`` either at a single signed lag or, for the
"far" cases, for every lag at least ``min_s`` away in one direction.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable

from .model import SERIES_START
from .moments import (
    EV,
    EVEV,
    MomentPolynomial,
    VarS,
    VarV,
    differenced_form,
    quadratic_covariance,
    quadratic_mean,
)

_TERM = re.compile(
    r"""\s*(?P<sign>[+-])?\s*(?P<coef>\d+(?:/\d+)?)?\s*
        (?:
            Var\((?P<var>[SV])(?P<vi>[123])\)
          | E\(V(?P<e1>[123])\)(?:\^(?P<pow>2)|E\(V(?P<e2>[123])\))
        )""",
    re.VERBOSE,
)
_FACTORED = re.compile(r"^\s*(\d+)\s*\((.*)\)\s*$", re.DOTALL)


class TableError(ValueError):
    """Malformed covariance table."""


class TableGap(LookupError):
    """No tabulated case covers a requested (series pair, lag, time)."""


def parse_expression(expr: str) -> MomentPolynomial:
    """Parse the typeset notation, e.g. ``2(Var(V3) + 4E(V2)E(V1) - E(V1)^2)``."""
    factor = Fraction(1)
    m = _FACTORED.match(expr)
    if m:
        factor, expr = Fraction(int(m.group(1))), m.group(2)
    pos, coeffs = 0, []
    expr = expr.strip()
    while pos < len(expr):
        tm = _TERM.match(expr, pos)
        if tm is None or tm.end() == pos:
            raise TableError(f"cannot parse term at {expr[pos:]!r}")
        if pos > 0 and tm.group("sign") is None:
            raise TableError(f"missing operator before {expr[pos:]!r}")
        coef = Fraction(tm.group("coef") or 1)
        if tm.group("sign") == "-":
            coef = -coef
        if tm.group("var"):
            i = int(tm.group("vi"))
            atom = VarV(i) if tm.group("var") == "V" else VarS(i)
        else:
            i = int(tm.group("e1"))
            j = i if tm.group("pow") else int(tm.group("e2"))
            atom = EVEV(i, j)
        coeffs.append((atom, coef * factor))
        pos = tm.end()
        while pos < len(expr) and expr[pos].isspace():
            pos += 1
    return MomentPolynomial(coeffs)


@dataclass(frozen=True)
class TableCase:
    id: str
    pair: tuple[int, int]
    expected: MomentPolynomial
    t_min: int
    lag: int | None = None
    far: str | None = None
    min_s: int | None = None
    plus_s: bool = False

    def covers(self, lag: int) -> bool:
        if self.far is None:
            return lag == self.lag
        if self.far == "+":
            return lag >= self.min_s
        return -lag >= self.min_s

    def floor(self, lag: int) -> int:
        """Smallest first-argument time for which the formula is stated."""
        return self.t_min + (abs(lag) if self.plus_s else 0)

    def describe(self) -> str:
        a, b = self.pair
        if self.far is None:
            sec = "t" if self.lag == 0 else f"t{self.lag:+d}"
            cond = f"t >= {self.t_min}"
        else:
            sec = f"t{self.far}s"
            cond = f"s >= {self.min_s}, t >= " + (f"s+{self.t_min}" if self.plus_s else str(self.t_min))
        return f"Cov(X{a}_t^2, X{b}_{{{sec}}}^2), {cond}"

    def probe_lags(self, extra: int = 4) -> list[int]:
        if self.far is None:
            return [self.lag]
        sign = 1 if self.far == "+" else -1
        return [sign * s for s in range(self.min_s, self.min_s + extra + 1)]


@dataclass(frozen=True)
class CovarianceTable:
    cases: tuple[TableCase, ...]
    identification: tuple[tuple[Fraction, ...], ...]
    identification_inverse: tuple[tuple[Fraction, ...], ...]

    def lookup(self, a: int, b: int, lag: int, t: int) -> TableCase:
        """Case for Cov(X(a)_t^2, X(b)_{t+lag}^2), normalised to the tabulated orientation.

        Tabulated cases have ``a <= b``; same-series cases are stated for
        non-positive lag.  The result expression is symmetric under the swap.
        """
        if a > b or (a == b and lag > 0):
            a, b, t, lag = b, a, t + lag, -lag
        for case in self.cases:
            if case.pair == (a, b) and case.covers(lag):
                if t < case.floor(lag):
                    raise TableGap(
                        f"case {case.id} requires t >= {case.floor(lag)}, got t={t}"
                    )
                return case
        raise TableGap(f"no tabulated covariance for series ({a},{b}) at lag {lag}")

    def by_id(self, case_id: str) -> TableCase:
        for case in self.cases:
            if case.id == case_id:
                return case
        raise KeyError(case_id)


def _fraction_matrix(rows) -> tuple[tuple[Fraction, ...], ...]:
    return tuple(tuple(Fraction(str(x)) for x in row) for row in rows)


def load_table(path: str | Path | None = None) -> CovarianceTable:
    """Load the covariance table (the bundled one when ``path`` is None)."""
    if path is None:
        text = resources.files("dlmvar").joinpath("data/covariance_table.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    cases = []
    try:
        for rec in raw["cases"]:
            cases.append(
                TableCase(
                    id=rec["id"],
                    pair=tuple(rec["pair"]),
                    expected=parse_expression(rec["expr"]),
                    t_min=int(rec["t_min"]),
                    lag=rec.get("lag"),
                    far=rec.get("far"),
                    min_s=rec.get("min_s"),
                    plus_s=bool(rec.get("plus_s", False)),
                )
            )
        return CovarianceTable(
            tuple(cases),
            _fraction_matrix(raw["identification"]),
            _fraction_matrix(raw["identification_inverse"]),
        )
    except KeyError as exc:
        raise TableError(f"table entry missing field {exc}") from None


@dataclass(frozen=True)
class CaseResult:
    id: str
    description: str
    expected: MomentPolynomial
    computed: MomentPolynomial
    lags_checked: tuple[int, ...]
    passed: bool

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "case": self.description,
            "lags": list(self.lags_checked),
            "pass": self.passed,
            "expected": str(self.expected),
            "computed": str(self.computed),
        }


@dataclass(frozen=True)
class TableReport:
    results: tuple[CaseResult, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list[CaseResult]:
        return [r for r in self.results if not r.passed]

    def records(self) -> list[dict]:
        return [r.to_record() for r in self.results]

    def render(self) -> str:
        lines = []
        for r in self.results:
            lines.append(f"{'PASS' if r.passed else 'FAIL'}  {r.id:<12} {r.description}")
            if not r.passed:
                lines.append(f"      tabulated: {r.expected}")
                lines.append(f"      derived:   {r.computed}")
        n_ok = sum(r.passed for r in self.results)
        lines.append(f"{n_ok}/{len(self.results)} tabulated covariance cases reproduced")
        return "\n".join(lines)


def _probe_time(case: TableCase, lag: int) -> int:
    a, b = case.pair
    return max(case.floor(lag), SERIES_START[a], SERIES_START[b] - lag)


def verify_table(table: CovarianceTable | None = None, shifts: Iterable[int] = (0, 7)) -> TableReport:
    """Re-derive every tabulated case symbolically and compare structurally.

    Each lag of each case is evaluated at its first valid time and at the
    given time shifts; the case passes only if every evaluation equals the
    tabulated polynomial exactly.
    """
    table = table or load_table()
    results = []
    for case in table.cases:
        a, b = case.pair
        lags = case.probe_lags()
        mismatch = None
        for lag in lags:
            t0 = _probe_time(case, lag)
            for shift in shifts:
                t = t0 + shift
                got = quadratic_covariance(differenced_form(a, t), differenced_form(b, t + lag))
                if got != case.expected and mismatch is None:
                    mismatch = got
        ok = mismatch is None
        computed = case.expected if ok else mismatch
        results.append(CaseResult(case.id, case.describe(), case.expected, computed, tuple(lags), ok))
    return TableReport(tuple(results))


def identification_matrix() -> tuple[tuple[Fraction, ...], ...]:
    """Rows: coefficients of E(V1..V3) in E[X(n)_t^2] for n = 1, 2, 3, derived symbolically."""
    rows = []
    for n in (1, 2, 3):
        mean = quadratic_mean(differenced_form(n, 10))
        rows.append(tuple(mean[EV(i)] for i in (1, 2, 3)))
    return tuple(rows)


def matmul_exact(a, b) -> tuple[tuple[Fraction, ...], ...]:
    return tuple(
        tuple(sum((Fraction(a[i][k]) * Fraction(b[k][j]) for k in range(len(b))), Fraction(0))
              for j in range(len(b[0])))
        for i in range(len(a))
    )


def n_step_mean(n: int) -> MomentPolynomial:
    return quadratic_mean(differenced_form(n, n + 2))

