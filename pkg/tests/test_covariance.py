import numpy as np
import pytest

from dlmvar.covariance import build_prior_structure
from dlmvar.model import PriorSpec, QuadraticLayout, SeriesLengthError


@pytest.fixture(scope="module")
def structure12():
    from dlmvar.model import example_prior

    return build_prior_structure(example_prior(), 12)


def test_shapes_and_symmetry(structure12):
    s = structure12
    m = 3 * 12 - 9
    assert s.mean_D.shape == (m,) and s.var_D.shape == (m, m) and s.cov_V_D.shape == (3, m)
    assert np.abs(s.var_D - s.var_D.T).max() == 0.0
    assert np.all(s.mean_D > 0)
    np.testing.assert_allclose(s.var_V, np.diag([25.0, 1.0, 0.04]), rtol=1e-14)


def test_mean_D_first_block(structure12):
    layout = structure12.layout
    np.testing.assert_allclose(structure12.mean_D[layout.block(1)], 150.09, rtol=1e-14)
    np.testing.assert_allclose(structure12.mean_D[layout.block(2)], 100.1, rtol=1e-14)
    np.testing.assert_allclose(structure12.mean_D[layout.block(3)], 100.11, rtol=1e-14)


def test_cov_V_D_pattern(structure12):
    layout = structure12.layout
    weights = {1: (6, 4, 4), 2: (2, 2, 2), 3: (1, 2, 3)}
    var_V = (25.0, 1.0, 0.04)
    for i in (1, 2, 3):
        for k in (1, 2, 3):
            np.testing.assert_allclose(structure12.cov_V_D[i - 1, layout.block(k)], weights[i][k - 1] * var_V[i - 1])


def test_routes_agree_exactly(prior):
    for N in (5, 12):
        a = build_prior_structure(prior, N, route="table")
        b = build_prior_structure(prior, N, route="oracle")
        assert np.array_equal(a.var_D, b.var_D)
        assert np.array_equal(a.mean_D, b.mean_D)
        assert np.array_equal(a.cov_V_D, b.cov_V_D)


def test_means_only_diagonal():
    spec = PriorSpec(0, 0, 0, 0, (1, 1, 1), (0, 0, 0), (0, 0, 0))
    s = build_prior_structure(spec, 10)
    block = s.layout.block(1)
    np.testing.assert_array_equal(np.diag(s.var_D)[block], 120.0)


def test_far_off_diagonals(prior):
    s = build_prior_structure(prior, 20)
    layout = s.layout
    expected = 0.04 + 4 * 1.0 + 36 * 25.0
    for t in range(3, 21):
        for u in range(t + 3, 21):
            assert s.var_D[layout.encode(1, t), layout.encode(1, u)] == pytest.approx(expected, rel=1e-14)


def test_coherent_prior_is_psd(prior):
    s = build_prior_structure(prior, 12)
    eig = np.linalg.eigvalsh(s.var_D)
    assert eig[0] >= -1e-8 * np.linalg.norm(s.var_D, 2)
    assert s.min_eigenvalue() == pytest.approx(eig[0])


def test_incoherent_prior_reported_not_repaired():
    # strongly negative cross terms with no S variance can break PSD
    spec = PriorSpec(0, 0, 0, 0, (5.0, 0.01, 5.0), (0, 0, 0), (0, 0, 0))
    s = build_prior_structure(spec, 12)
    assert np.isfinite(s.min_eigenvalue())
    assert np.abs(s.var_D - s.var_D.T).max() == 0.0


def test_bad_inputs(prior):
    with pytest.raises(SeriesLengthError):
        build_prior_structure(prior, 4)
    with pytest.raises(ValueError):
        build_prior_structure(prior, 8, route="guess")


def test_csv_dump(tmp_path, prior):
    s = build_prior_structure(prior, 6)
    paths = s.to_csv(tmp_path)
    assert sorted(p.name for p in paths) == ["cov_V_D.csv", "mean_D.csv", "var_D.csv"]
    assert QuadraticLayout(6).size == 9
