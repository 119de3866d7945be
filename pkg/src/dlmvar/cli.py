"""Command line entry point: ``dlmvar analyze | verify | simulate``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical error,
5 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import plotting
from .adjust import DEFAULT_REL_TOL, penrose_residuals, pseudo_inverse, sequential_adjustments, unbiased_estimates
from .reference import (
    TableError,
    TableGap,
    identification_matrix,
    load_table,
    matmul_exact,
    n_step_mean,
    verify_table,
)
from .covariance import build_prior_structure
from .forecast import DEFAULT_BURN_IN, forecast_series
from .io import (
    REPORT_SCHEMA_VERSION,
    ConfigError,
    DataError,
    read_series_csv,
    write_forecast_csv,
    write_json,
    write_linear_csv,
    write_quadratic_csv,
    write_series_csv,
    write_trajectory_csv,
    write_unbiased_csv,
)
from .model import MIN_LENGTH, PriorSpec, difference_series, example_prior
from .moments import EV
from .simulate import FAMILIES, SimConfig, mc_check_var_D, simulate_series

log = logging.getLogger("dlmvar")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4, 5
OUT_ENV = "DLMVAR_OUT"
DEFAULT_OUT = "dlmvar-output"


class VerificationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    prior: PriorSpec = field(default_factory=example_prior)
    data_path: str | None = None
    N: int | None = None
    N_grid: tuple[int, ...] | None = None
    grid_step: int = 5
    rel_tol: float = DEFAULT_REL_TOL
    burn_in: int = DEFAULT_BURN_IN
    output_dir: str | None = None
    seed: int = 0
    T: int = 200
    family: str = "gaussian"
    replicates: int = 100_000
    mc: bool = False
    plots: bool = True
    table_path: str | None = None
    dump_prior: bool = False

    def __post_init__(self):
        if self.rel_tol <= 0 or self.rel_tol >= 1:
            raise ConfigError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be non-negative")
        if self.grid_step < 1:
            raise ConfigError("grid_step must be positive")
        if self.N is not None and self.N < MIN_LENGTH:
            raise ConfigError(f"N must be at least {MIN_LENGTH}")
        if self.T < MIN_LENGTH:
            raise ConfigError(f"T must be at least {MIN_LENGTH}")
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}")
        if self.replicates < 2:
            raise ConfigError("replicates must be at least 2")
        if self.N_grid is not None:
            grid = tuple(int(n) for n in self.N_grid)
            if not grid or grid[0] < MIN_LENGTH or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"N_grid must be strictly increasing with every N >= {MIN_LENGTH}")
            object.__setattr__(self, "N_grid", grid)


_PRIOR_KEYS = {f.name for f in fields(PriorSpec)}
_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"prior"}


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a flat JSON config; prior keys absent from the file keep the example prior."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(doc) - _PRIOR_KEYS - _RUN_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        prior_doc = example_prior().to_dict()
        prior_doc.update({k: doc[k] for k in _PRIOR_KEYS & set(doc)})
        prior = PriorSpec.from_dict(prior_doc)
        return RunConfig(prior=prior, **{k: doc[k] for k in _RUN_KEYS & set(doc)})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_grid(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"--grid expects comma-separated integers, got {text!r}") from None


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    over = {}
    for flag, key in (("data", "data_path"), ("N", "N"), ("rel_tol", "rel_tol"), ("burn_in", "burn_in"),
                      ("seed", "seed"), ("replicates", "replicates"), ("T", "T"), ("family", "family"),
                      ("table", "table_path")):
        val = getattr(args, flag, None)
        if val is not None:
            over[key] = val
    if getattr(args, "grid", None):
        over["N_grid"] = _parse_grid(args.grid)
    if getattr(args, "mc", False):
        over["mc"] = True
    if getattr(args, "no_plots", False):
        over["plots"] = False
    if getattr(args, "dump_prior", False):
        over["dump_prior"] = True
    out = getattr(args, "out", None) or os.environ.get(OUT_ENV)
    if out:
        over["output_dir"] = out
    try:
        return replace(cfg, **over)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def default_grid(N: int, step: int) -> tuple[int, ...]:
    grid = [n for n in range(step, N + 1, step) if n >= MIN_LENGTH]
    if not grid or grid[-1] != N:
        grid.append(N)
    return tuple(grid)


# -- analyze -----------------------------------------------------------------


def cmd_analyze(cfg: RunConfig) -> dict:
    """Run differencing, adjustment, unbiased estimation and forecasting; write all artifacts."""
    if cfg.data_path is None:
        raise ConfigError("analyze needs a data file (--data or data_path in the config)")
    try:
        cfg.prior.require_positive_means()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    series = read_series_csv(cfg.data_path)
    N = cfg.N or series.T
    if N > series.T:
        raise ConfigError(f"N={N} exceeds the series length {series.T}")
    grid = cfg.N_grid or default_grid(N, cfg.grid_step)
    if grid[-1] > N:
        raise ConfigError(f"N_grid extends past N={N}")
    out = Path(cfg.output_dir or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)

    table = load_table(cfg.table_path) if cfg.table_path else None
    diff = difference_series(series)
    prior = cfg.prior

    def builder(n: int):
        return build_prior_structure(prior, n, table=table)

    trajectory = sequential_adjustments(builder, diff, grid, cfg.rel_tol)
    final = dict(trajectory).get(N)
    if final is None:
        final = sequential_adjustments(builder, diff, (N,), cfg.rel_tol)[0][1]
    unbiased = unbiased_estimates(diff, N)

    original = forecast_series(prior, prior.mean_V, series, cfg.burn_in)
    revised_v = np.array(final.adjusted_mean, dtype=float)
    fallback = [i + 1 for i in range(3) if not revised_v[i] > 0]
    for i in fallback:
        log.warning("adjusted E[V%d] = %g is not positive; revised forecast keeps the prior value %g",
                    i, revised_v[i - 1], prior.mean_V[i - 1])
        revised_v[i - 1] = prior.mean_V[i - 1]
    revised = forecast_series(prior, revised_v, series, cfg.burn_in)
    for i in np.nonzero(final.flagged)[0]:
        log.warning("V%d revision is %.2f resolved standard deviations from the prior", i + 1, final.diagnostics[i])

    artifacts = {
        "report": "adjustment.json",
        "trajectory": "trajectory.csv",
        "unbiased": "unbiased.csv",
        "forecast_original": "forecast_original.csv",
        "forecast_revised": "forecast_revised.csv",
        "linear_series": "linear_series.csv",
        "quadratic_series": "quadratic_series.csv",
    }
    write_trajectory_csv(out / artifacts["trajectory"], trajectory)
    write_unbiased_csv(out / artifacts["unbiased"], series, unbiased)
    write_forecast_csv(out / artifacts["forecast_original"], series, original)
    write_forecast_csv(out / artifacts["forecast_revised"], series, revised)
    write_linear_csv(out / artifacts["linear_series"], series, diff)
    write_quadratic_csv(out / artifacts["quadratic_series"], series, diff)
    if cfg.dump_prior:
        for p in builder(N).to_csv(out / "prior_structure"):
            artifacts[f"prior_{p.stem}"] = str(p.relative_to(out))
    if cfg.plots:
        figs = {
            "figure_series": plotting.plot_series(out / "fig_series.png", series.values),
            "figure_linear": plotting.plot_differenced(out / "fig_linear.png", diff),
            "figure_quadratic": plotting.plot_differenced(out / "fig_quadratic.png", diff, squared=True),
            "figure_trajectory": plotting.plot_trajectory(out / "fig_trajectory.png", trajectory),
            "figure_unbiased": plotting.plot_unbiased(out / "fig_unbiased.png", unbiased),
            "figure_forecast_original": plotting.plot_forecast(
                out / "fig_forecast_original.png", original, "One-step forecasts, prior variances"),
            "figure_forecast_revised": plotting.plot_forecast(
                out / "fig_forecast_revised.png", revised, "One-step forecasts, adjusted variances"),
        }
        artifacts.update({k: p.name for k, p in figs.items()})

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "N": N,
        "T": series.T,
        "rel_tol": cfg.rel_tol,
        "prior": prior.to_dict(),
        "adjustment": final.to_dict(),
        "unbiased_estimates": unbiased.estimates.tolist(),
        "forecast": {
            "burn_in": cfg.burn_in,
            "original": {"variances": list(original.variances), "coverage": original.coverage},
            "revised": {"variances": list(revised.variances), "coverage": revised.coverage,
                        "fallback_components": fallback},
        },
        "artifacts": artifacts,
    }
    write_json(out / artifacts["report"], report)
    return report


# -- verify ------------------------------------------------------------------


@dataclass(frozen=True)
class CheckRow:
    name: str
    passed: bool
    detail: str


def cmd_verify(cfg: RunConfig) -> list[CheckRow]:
    """Symbolic, algebraic and numerical self-checks; Monte Carlo when ``cfg.mc``."""
    rows: list[CheckRow] = []
    table = load_table(cfg.table_path)
    t0 = time.perf_counter()
    report = verify_table(table)
    elapsed = time.perf_counter() - t0
    for r in report.results:
        detail = r.description if r.passed else f"tabulated {r.expected} | derived {r.computed}"
        rows.append(CheckRow(f"table:{r.id}", r.passed, detail))
    rows.append(CheckRow("table:runtime", elapsed < 1.0, f"{elapsed:.3f} s"))

    derived = identification_matrix()
    rows.append(CheckRow("identification:matrix", derived == table.identification,
                         f"derived {[[str(x) for x in row] for row in derived]}"))
    prod = matmul_exact(table.identification, table.identification_inverse)
    eye = tuple(tuple(Fraction(int(i == j)) for j in range(3)) for i in range(3))
    rows.append(CheckRow("identification:inverse", prod == eye, "product with the tabulated inverse"))
    for n in range(2, 7):
        m = n_step_mean(n)
        ok = m.as_dict() == {EV(1): 4, EV(2): 2, EV(3): n}
        rows.append(CheckRow(f"identification:n={n}", ok, str(m)))

    for N in (5, 50, 200):
        var_D = build_prior_structure(cfg.prior, N, table=table).var_D
        pinv, rank = pseudo_inverse(var_D, cfg.rel_tol)
        res = penrose_residuals(var_D, pinv)
        rows.append(CheckRow(f"penrose:N={N}", max(res) <= 1e-8,
                             f"rank {rank}, residuals " + ", ".join(f"{x:.1e}" for x in res)))

    if cfg.mc:
        chk = mc_check_var_D(cfg.prior, 8, cfg.replicates, cfg.seed, family="chi2")
        rows.append(CheckRow("montecarlo:var_D(N=8)", chk.max_discrepancy < 5,
                             f"max standardized discrepancy {chk.max_discrepancy:.2f} over {chk.replicates} replicates"))

    if cfg.output_dir:
        out = Path(cfg.output_dir)
        write_json(out / "verify.json", {
            "cases": report.records(),
            "checks": [{"name": r.name, "pass": r.passed, "detail": r.detail} for r in rows],
            "passed": all(r.passed for r in rows),
        })
    return rows


def render_rows(rows: list[CheckRow]) -> str:
    width = max(len(r.name) for r in rows)
    lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}" for r in rows]
    n_ok = sum(r.passed for r in rows)
    lines.append(f"{n_ok}/{len(rows)} checks passed")
    return "\n".join(lines)


# -- simulate ----------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> Path:
    """Write one simulated series as a CSV that ``analyze`` ingests unchanged."""
    sim = SimConfig(cfg.prior, T=cfg.T, seed=cfg.seed, family=cfg.family)
    series = simulate_series(sim)
    target = Path(cfg.output_dir or DEFAULT_OUT)
    if target.suffix.lower() != ".csv":
        target = target / "series.csv"
    return write_series_csv(target, series)


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dlmvar",
        description="Bayes linear learning of the variance components of a locally linear DLM.",
        epilog=(
            "Config: a flat JSON object whose keys mirror the prior fields (mean_M1, var_M1, mean_N1, "
            "var_N1, mean_V, var_V, var_S; defaults are the example prior 20, 400, 0, 9, "
            "[25, 0.04, 0.01], [25, 1, 0.04], [1250, 0.0032, 0.0002]) and the run fields "
            "(data_path, N, N_grid, grid_step=5, rel_tol=1e-10, burn_in=10, output_dir, seed=0, T=200, "
            "family=gaussian, replicates=100000, mc=false, plots=true, table_path, dump_prior=false). "
            f"The output directory can also be set with ${OUT_ENV}. "
            "Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical error, 5 verification failure."
        ),
    )
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and output_dir)")
        sp.add_argument("--seed", type=int, help="random seed (default 0)")

    a = sub.add_parser("analyze", help="adjust variance beliefs on a series and write reports")
    common(a)
    a.add_argument("--data", help="CSV with a 'value' column and optional leading 't' column")
    a.add_argument("--N", type=int, help="number of observations used for adjustment (default: all)")
    a.add_argument("--grid", help="comma-separated horizons for the adjustment trajectory (default: every 5)")
    a.add_argument("--rel-tol", type=float, help="relative singular value cutoff (default 1e-10)")
    a.add_argument("--burn-in", type=int, help="forecast steps excluded from coverage (default 10)")
    a.add_argument("--table", help="alternative covariance table (JSON)")
    a.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    a.add_argument("--dump-prior", action="store_true", help="also write E[D], Var(D), Cov(V,D) as CSV")

    v = sub.add_parser("verify", help="re-derive the tabulated covariances and run numerical checks")
    common(v)
    v.add_argument("--mc", action="store_true", help="include the Monte Carlo covariance check")
    v.add_argument("--replicates", type=int, help="Monte Carlo replicates (default 100000)")
    v.add_argument("--rel-tol", type=float, help="relative singular value cutoff (default 1e-10)")
    v.add_argument("--table", help="alternative covariance table (JSON)")

    s = sub.add_parser("simulate", help="simulate a series from the prior's mean variances")
    common(s)
    s.add_argument("--T", type=int, help="series length (default 200)")
    s.add_argument("--family", choices=FAMILIES, help="innovation family (default gaussian)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "analyze":
            report = cmd_analyze(cfg)
            adj = report["adjustment"]
            print("adjusted E[V] = " + ", ".join(f"{x:.6g}" for x in adj["adjusted_mean"]))
            print("resolution    = " + ", ".join(f"{x:.4f}" for x in adj["resolution"]))
            print(f"reports written to {cfg.output_dir or DEFAULT_OUT}")
        elif args.command == "verify":
            rows = cmd_verify(cfg)
            print(render_rows(rows))
            if not all(r.passed for r in rows):
                raise VerificationFailure("one or more checks failed")
        else:
            print(f"wrote {cmd_simulate(cfg)}")
    except (ConfigError, TableError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, ArithmeticError, TableGap) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
