import json
import time
from importlib import resources
from fractions import Fraction

import pytest

from dlmvar.reference import (
    TableError,
    TableGap,
    identification_matrix,
    load_table,
    matmul_exact,
    n_step_mean,
    parse_expression,
    verify_table,
)
from dlmvar.moments import EV, EVEV, MomentPolynomial, VarS, VarV


def bundled_table():
    return json.loads(resources.files("dlmvar").joinpath("data/covariance_table.json").read_text())


@pytest.fixture(scope="module")
def table():
    return load_table()


def test_parse_expression():
    p = parse_expression("2(3Var(V3) + 2Var(V2) + 8Var(V1))")
    assert p == MomentPolynomial({VarV(3): 6, VarV(2): 4, VarV(1): 16})
    q = parse_expression("8E(V2)E(V1) - 4E(V1)^2 + Var(S1)")
    assert q == MomentPolynomial({EVEV(1, 2): 8, EVEV(1, 1): -4, VarS(1): 1})
    with pytest.raises(TableError):
        parse_expression("3Var(W1)")


def test_table_coverage(table):
    pairs = {}
    for case in table.cases:
        pairs[case.pair] = pairs.get(case.pair, 0) + 1
    assert pairs == {(1, 1): 4, (2, 2): 5, (3, 3): 6, (1, 2): 8, (1, 3): 9, (2, 3): 10}


def test_every_case_reproduced(table):
    t0 = time.perf_counter()
    report = verify_table(table)
    assert time.perf_counter() - t0 < 1.0
    assert report.passed, report.render()
    assert len(report.records()) == len(table.cases)


def test_quoted_cases(table):
    assert table.by_id("x3x3_lag-2").expected == parse_expression(
        "Var(S3) + Var(S1) + 9Var(V3) + 4Var(V2) + 16Var(V1) + 4E(V3)E(V1)")
    assert table.by_id("x1x2_lag0").expected[EVEV(1, 1)] == -4
    far = parse_expression("2(3Var(V3) + 2Var(V2) + 8Var(V1))")
    assert table.by_id("x2x3_far+").expected == far
    assert table.by_id("x2x3_far-").expected == far


def test_lookup_normalizes_and_guards(table):
    a = table.lookup(1, 1, 2, 10)
    b = table.lookup(1, 1, -2, 12)
    assert a.id == b.id == "x1x1_lag-2"
    assert table.lookup(2, 1, 0, 10).id == "x1x2_lag0"
    with pytest.raises(TableGap, match="requires t >= 9"):
        table.lookup(3, 3, -4, 8)


def test_gap_is_loud(table, tmp_path):
    doc = bundled_table()
    doc["cases"] = [c for c in doc["cases"] if c["id"] != "x1x1_lag-1"]
    path = tmp_path / "gappy.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(TableGap):
        load_table(path).lookup(1, 1, -1, 10)


def test_tampered_table_fails(tmp_path):
    doc = bundled_table()
    for c in doc["cases"]:
        if c["id"] == "x1x1_lag0":
            c["expr"] = c["expr"].replace("72Var(V1)", "70Var(V1)")
    path = tmp_path / "tampered.json"
    path.write_text(json.dumps(doc))
    report = verify_table(load_table(path))
    assert not report.passed
    assert [r.id for r in report.failures()] == ["x1x1_lag0"]
    assert "70Var(V1)" in report.render()


def test_identification_algebra(table):
    assert identification_matrix() == table.identification
    eye = tuple(tuple(Fraction(int(i == j)) for j in range(3)) for i in range(3))
    assert matmul_exact(table.identification, table.identification_inverse) == eye
    assert matmul_exact(table.identification_inverse, table.identification) == eye
    for n in range(2, 7):
        assert n_step_mean(n) == MomentPolynomial({EV(1): 4, EV(2): 2, EV(3): n})
