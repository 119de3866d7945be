"""Prior moments of the stacked quadratic observables.

Two assembly routes produce identical matrices when the covariance table and
the symbolic engine agree: ``"table"`` looks every entry up in the
tabulated formulas, ``"oracle"`` derives each distinct (series pair, lag)
polynomial with :func:`dlmvar.moments.quadratic_covariance`.  Either way each
polynomial is evaluated once in exact rationals and rounded to float.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .reference import CovarianceTable, load_table
from .model import SERIES_START, PriorSpec, QuadraticLayout
from .moments import MomentPolynomial, atom_values, differenced_form, quadratic_covariance

_ORACLE_CACHE: dict[tuple[int, int, int], MomentPolynomial] = {}


@dataclass(frozen=True)
class PriorStructure:
    mean_D: np.ndarray
    var_D: np.ndarray
    cov_V_D: np.ndarray
    mean_V: np.ndarray
    var_V: np.ndarray
    N: int

    @property
    def layout(self) -> QuadraticLayout:
        return QuadraticLayout(self.N)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.var_D)[0])

    def to_csv(self, out_dir: str | Path) -> list[Path]:
        """Write mean_D, var_D and cov_V_D as CSV files labelled by (series, t)."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        layout = self.layout
        labels = [f"x{k}_{t}" for k, t in map(layout.decode, range(layout.size))]
        paths = []
        for name, rows, row_labels in (
            ("mean_D", self.mean_D[None, :], ["mean"]),
            ("var_D", self.var_D, labels),
            ("cov_V_D", self.cov_V_D, ["V1", "V2", "V3"]),
        ):
            path = out_dir / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["row"] + labels)
                for lab, row in zip(row_labels, rows):
                    w.writerow([lab] + [repr(float(v)) for v in row])
            paths.append(path)
        return paths


def _oracle_polynomial(a: int, b: int, lag: int) -> MomentPolynomial:
    key = (a, b, lag)
    poly = _ORACLE_CACHE.get(key)
    if poly is None:
        t = max(SERIES_START[a], SERIES_START[b] - lag)
        poly = quadratic_covariance(differenced_form(a, t), differenced_form(b, t + lag))
        _ORACLE_CACHE[key] = poly
    return poly


def build_prior_structure(
    spec: PriorSpec,
    N: int,
    route: str = "table",
    table: CovarianceTable | None = None,
) -> PriorStructure:
    """Assemble E[D], Var(D) and Cov(V, D) for horizon ``N``."""
    if route not in ("table", "oracle"):
        raise ValueError(f"route must be 'table' or 'oracle', got {route!r}")
    layout = QuadraticLayout(N)
    table = table or load_table()
    values = atom_values(spec.mean_V, spec.var_V, spec.var_S)
    ident = table.identification

    mean_D = np.empty(layout.size)
    cov_V_D = np.empty((3, layout.size))
    for k in (1, 2, 3):
        blk = layout.block(k)
        mean_D[blk] = float(sum(ident[k - 1][i] * values[("EV", i + 1)] for i in range(3)))
        for i in range(3):
            cov_V_D[i, blk] = float(ident[k - 1][i] * values[("VarV", i + 1)])

    var_D = np.empty((layout.size, layout.size))
    evaluated: dict[object, float] = {}
    for a in (1, 2, 3):
        ta = np.arange(SERIES_START[a], N + 1)
        for b in range(a, 4):
            tb = np.arange(SERIES_START[b], N + 1)
            lags = tb[None, :] - ta[:, None]
            blockvals = np.empty(lags.shape)
            for lag in np.unique(lags):
                lag = int(lag)
                mask = lags == lag
                if route == "table":
                    rows = np.nonzero(mask.any(axis=1))[0]
                    # floor check at the earliest row using this lag
                    case = table.lookup(a, b, lag, int(ta[rows[0]]))
                    key = case.id
                    if key not in evaluated:
                        evaluated[key] = float(case.expected.evaluate(values))
                else:
                    key = (a, b, lag)
                    if key not in evaluated:
                        evaluated[key] = float(_oracle_polynomial(a, b, lag).evaluate(values))
                blockvals[mask] = evaluated[key]
            var_D[layout.block(a), layout.block(b)] = blockvals
            if b != a:
                var_D[layout.block(b), layout.block(a)] = blockvals.T

    return PriorStructure(
        mean_D=mean_D,
        var_D=var_D,
        cov_V_D=cov_V_D,
        mean_V=np.array(spec.mean_V),
        var_V=np.diag(spec.var_V),
        N=N,
    )
