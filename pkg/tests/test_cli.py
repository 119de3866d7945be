import csv
import json
from importlib import resources

import numpy as np
import pytest

from dlmvar.cli import default_grid, load_config, main
from dlmvar.io import (
    ConfigError,
    DataError,
    fmt,
    read_series_csv,
    validate_report,
    write_series_csv,
)
from dlmvar.model import ObservedSeries


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def series_csv(tmp_path):
    path = tmp_path / "series.csv"
    assert main(["simulate", "--out", str(path), "--T", "60", "--seed", "4"]) == 0
    return path


def test_simulate_writes_ingestible_csv(series_csv):
    r = rows(series_csv)
    assert r[0] == ["value"] and len(r) == 61
    assert read_series_csv(series_csv).T == 60


def test_simulate_default_length_and_directory(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "sims")]) == 0
    assert len(rows(tmp_path / "sims" / "series.csv")) == 201


def test_simulate_zero_variance_constant(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mean_M1": 7.0, "var_M1": 0, "var_N1": 0, "mean_V": [0, 0, 0],
                               "var_V": [0, 0, 0], "var_S": [0, 0, 0], "T": 12}))
    out = tmp_path / "flat.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert {r[0] for r in rows(out)[1:]} == {"7.0"}


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["simulate", "--out", str(p), "--seed", "9"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_analyze_round_trip(series_csv, tmp_path):
    out = tmp_path / "run"
    assert main(["analyze", "--data", str(series_csv), "--out", str(out), "--grid", "10,30,60"]) == 0
    report = json.loads((out / "adjustment.json").read_text())
    validate_report(report)
    for name in report["artifacts"].values():
        assert (out / name).is_file()
    traj = rows(out / "trajectory.csv")
    assert traj[0][:3] == ["N", "mean_1", "lower_1"]
    assert [r[0] for r in traj[1:]] == ["10", "30", "60"]
    assert rows(out / "linear_series.csv")[0] == ["t", "x1", "x2", "x3"]
    assert rows(out / "quadratic_series.csv")[0] == ["t", "x1_sq", "x2_sq", "x3_sq"]
    assert len(rows(out / "forecast_original.csv")) == 61
    assert len(rows(out / "unbiased.csv")) == 57
    assert (out / "fig_trajectory.png").read_bytes()[:4] == b"\x89PNG"


def test_analyze_preserves_labels(tmp_path):
    x = np.random.default_rng(0).normal(size=20).cumsum() + 50
    data = tmp_path / "labelled.csv"
    write_series_csv(data, ObservedSeries(x, tuple(f"2024-01-{d:02d}" for d in range(1, 21))))
    out = tmp_path / "run"
    assert main(["analyze", "--data", str(data), "--out", str(out), "--no-plots"]) == 0
    assert rows(out / "forecast_revised.csv")[1][0] == "2024-01-01"
    assert rows(out / "linear_series.csv")[1][0] == "2024-01-03"
    assert not list(out.glob("*.png"))


def test_default_grid():
    assert default_grid(23, 5) == (5, 10, 15, 20, 23)
    assert default_grid(20, 5) == (5, 10, 15, 20)
    assert default_grid(6, 5) == (5, 6)


def test_env_var_sets_output(series_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("DLMVAR_OUT", str(tmp_path / "from_env"))
    assert main(["analyze", "--data", str(series_csv), "--no-plots", "--N", "20"]) == 0
    assert (tmp_path / "from_env" / "adjustment.json").is_file()
    # the flag wins over the environment
    assert main(["analyze", "--data", str(series_csv), "--no-plots", "--N", "20",
                 "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "adjustment.json").is_file()


def test_config_file_drives_run(series_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"data_path": str(series_csv), "N": 25, "N_grid": [15, 25],
                               "output_dir": str(tmp_path / "cfgout"), "plots": False, "burn_in": 3}))
    assert main(["analyze", "--config", str(cfg)]) == 0
    report = json.loads((tmp_path / "cfgout" / "adjustment.json").read_text())
    assert report["N"] == 25 and report["forecast"]["burn_in"] == 3


def test_zero_innovation_report(tmp_path):
    # no realisable path has D equal to E[D], so the vector is built directly
    from dlmvar.adjust import adjust_variances
    from dlmvar.covariance import build_prior_structure
    from dlmvar.model import QuadraticVector, example_prior

    s = build_prior_structure(example_prior(), 30)
    res = adjust_variances(s, QuadraticVector(s.mean_D, 30)).to_dict()
    assert res["diagnostics"] == [0.0, 0.0, 0.0]
    assert res["adjusted_mean"] == list(s.mean_V)


def test_short_series_is_data_error(tmp_path, capsys):
    data = tmp_path / "short.csv"
    data.write_text("value\n1\n2\n3\n4\n")
    assert main(["analyze", "--data", str(data), "--out", str(tmp_path / "o")]) == 3
    assert "minimum 5 observations" in capsys.readouterr().err


@pytest.mark.parametrize("body", ["value\n1\n2\nabc\n4\n5\n", "value\n1\n2\n\n4\nnan\n6\n", "x\n1\n"])
def test_bad_data(tmp_path, body):
    data = tmp_path / "bad.csv"
    data.write_text(body)
    with pytest.raises(DataError):
        read_series_csv(data)


def test_missing_data_file(tmp_path):
    assert main(["analyze", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 3


def test_config_errors(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mean_V": [1, 1, 1], "colour": "red"}))
    with pytest.raises(ConfigError, match="colour"):
        load_config(cfg)
    assert main(["verify", "--config", str(cfg)]) == 2
    cfg.write_text(json.dumps({"var_V": [1, -1, 1]}))
    assert main(["verify", "--config", str(cfg)]) == 2
    cfg.write_text("{not json")
    assert main(["verify", "--config", str(cfg)]) == 2
    assert main(["verify", "--config", str(tmp_path / "absent.json")]) == 2
    assert main(["analyze", "--out", str(tmp_path)]) == 2


def test_nonpositive_means_rejected_for_analysis(series_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mean_V": [25, 0, 0.01]}))
    assert main(["analyze", "--config", str(cfg), "--data", str(series_csv), "--out", str(tmp_path)]) == 2


def test_N_beyond_series(series_csv, tmp_path):
    assert main(["analyze", "--data", str(series_csv), "--N", "61", "--out", str(tmp_path)]) == 2


def bundled_table_doc():
    return json.loads(resources.files("dlmvar").joinpath("data/covariance_table.json").read_text())


def test_table_gap_is_numerical_error(series_csv, tmp_path):
    doc = bundled_table_doc()
    doc["cases"] = [c for c in doc["cases"] if c["id"] != "x2x3_lag0"]
    table = tmp_path / "gappy.json"
    table.write_text(json.dumps(doc))
    assert main(["analyze", "--data", str(series_csv), "--table", str(table),
                 "--out", str(tmp_path / "o"), "--no-plots"]) == 4


def test_verify_default_passes(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out
    summary = json.loads((tmp_path / "verify.json").read_text())
    assert summary["passed"] and len(summary["cases"]) == 42


def test_verify_tampered_table(tmp_path, capsys):
    doc = bundled_table_doc()
    for c in doc["cases"]:
        if c["id"] == "x3x3_lag-1":
            c["expr"] = c["expr"].replace("13Var(V3)", "12Var(V3)")
    table = tmp_path / "tampered.json"
    table.write_text(json.dumps(doc))
    assert main(["verify", "--table", str(table)]) == 5
    out = capsys.readouterr().out
    assert "FAIL  table:x3x3_lag-1" in out
    assert out.count("FAIL") == 1


def test_verify_with_monte_carlo(capsys):
    assert main(["verify", "--mc", "--replicates", "20000", "--seed", "3"]) == 0
    assert "PASS  montecarlo" in capsys.readouterr().out


def test_fmt_is_locale_free():
    assert fmt(0.1) == "0.1" and fmt(1e-20) == "1e-20" and fmt(3) == "3"
    assert fmt(None) == "" and fmt(True) == "true" and fmt(float("nan")) == "nan"


def test_schema_rejects_malformed(series_csv, tmp_path):
    import jsonschema

    out = tmp_path / "run"
    assert main(["analyze", "--data", str(series_csv), "--out", str(out), "--no-plots"]) == 0
    report = json.loads((out / "adjustment.json").read_text())
    report["schema_version"] = "0.9"
    with pytest.raises(jsonschema.ValidationError):
        validate_report(report)


def test_dump_prior_matrices(series_csv, tmp_path):
    out = tmp_path / "run"
    assert main(["analyze", "--data", str(series_csv), "--out", str(out), "--N", "12",
                 "--no-plots", "--dump-prior"]) == 0
    report = json.loads((out / "adjustment.json").read_text())
    validate_report(report)
    var_D = rows(out / report["artifacts"]["prior_var_D"])
    assert len(var_D) == 1 + 27 and var_D[0][1] == "x1_3"
