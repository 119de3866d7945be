"""CSV and JSON serialization for series, configs, trajectories and reports."""
from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import SERIES_START, DifferencedSeries, ObservedSeries, SeriesLengthError

REPORT_SCHEMA_VERSION = "1.0.0"


class DataError(ValueError):
    """Input data could not be ingested."""


class ConfigError(ValueError):
    """Configuration document is invalid."""


def fmt(x) -> str:
    """Locale-independent shortest round-trip formatting; blank for missing."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def read_series_csv(path: str | Path) -> ObservedSeries:
    """Read a ``value`` column, with an optional leading ``t`` label column."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header not in (["value"], ["t", "value"]):
            raise DataError(f"{path}: header must be 'value' or 't,value', got {','.join(header)}")
        labels, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            raw = row[-1].strip()
            try:
                val = float(raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {raw!r}") from None
            if not math.isfinite(val):
                raise DataError(f"{path}:{lineno}: missing or non-finite value")
            values.append(val)
            if len(header) == 2:
                labels.append(row[0].strip())
    try:
        return ObservedSeries(np.array(values), tuple(labels) if len(header) == 2 else None)
    except SeriesLengthError as exc:
        raise DataError(str(exc)) from None


def write_series_csv(path: str | Path, series: ObservedSeries) -> Path:
    if series.labels is None:
        return write_csv(path, ["value"], ([v] for v in series.values))
    return write_csv(path, ["t", "value"], zip(series.labels, series.values))


def _label(series: ObservedSeries, t: int):
    lab = series.label(t)
    return lab if isinstance(lab, str) else int(lab)


def write_linear_csv(path, series: ObservedSeries, diff: DifferencedSeries) -> Path:
    rows = []
    for t in range(SERIES_START[1], diff.T + 1):
        rows.append([_label(series, t)] + [diff.at(k, t) if t >= SERIES_START[k] else None for k in (1, 2, 3)])
    return write_csv(path, ["t", "x1", "x2", "x3"], rows)


def write_quadratic_csv(path, series: ObservedSeries, diff: DifferencedSeries) -> Path:
    rows = []
    for t in range(SERIES_START[1], diff.T + 1):
        rows.append([_label(series, t)] + [diff.at(k, t) ** 2 if t >= SERIES_START[k] else None for k in (1, 2, 3)])
    return write_csv(path, ["t", "x1_sq", "x2_sq", "x3_sq"], rows)


TRAJECTORY_HEADER = ["N"] + [
    f"{name}_{i}" for i in (1, 2, 3) for name in ("mean", "lower", "upper", "resolution", "diagnostic")
]


def write_trajectory_csv(path, trajectory) -> Path:
    rows = []
    for N, res in trajectory:
        row = [N]
        for i in range(3):
            row += [res.adjusted_mean[i], res.lower[i], res.upper[i], res.resolution[i], res.diagnostics[i]]
        rows.append(row)
    return write_csv(path, TRAJECTORY_HEADER, rows)


def write_unbiased_csv(path, series: ObservedSeries, est) -> Path:
    rows = [
        [_label(series, int(t))] + list(run) + list(c)
        for t, run, c in zip(est.times, est.running, est.combos)
    ]
    header = ["t", "estimate_1", "estimate_2", "estimate_3", "combo_1", "combo_2", "combo_3"]
    return write_csv(path, header, rows)


FORECAST_HEADER = ["t", "forecast_mean", "forecast_var", "lower", "upper", "observed", "inside", "level", "trend"]


def write_forecast_csv(path, series: ObservedSeries, result) -> Path:
    rows = [
        [_label(series, s.t), s.forecast_mean, s.forecast_var, s.lower, s.upper, s.observed, s.inside, s.level, s.trend]
        for s in result.steps
    ]
    return write_csv(path, FORECAST_HEADER, rows)


def json_safe(obj):
    """Replace non-finite floats by None so the document is strict JSON."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(json_safe(doc), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def report_schema() -> dict:
    return json.loads(resources.files("dlmvar").joinpath("data/report_schema.json").read_text())


def validate_report(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, report_schema())
