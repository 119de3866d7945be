import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dlmvar.forecast import G, evolution_covariance, forecast_series
from dlmvar.model import ObservedSeries, PriorSpec
from dlmvar.simulate import SimConfig, simulate_series

V = (25.0, 0.04, 0.01)


def two_line_first_step(prior, v1, x1):
    """First forecast and update done by hand for a 2-state model."""
    q = prior.var_M1 + v1
    k = np.array([prior.var_M1, 0.0]) / q
    m = np.array([prior.mean_M1, prior.mean_N1]) + k * (x1 - prior.mean_M1)
    return prior.mean_M1, q, m


def test_first_step_by_hand(prior):
    x = ObservedSeries([30.0, 31, 29, 32, 30])
    res = forecast_series(prior, V, x)
    f, q, m = two_line_first_step(prior, 25.0, 30.0)
    s = res.steps[0]
    assert s.forecast_mean == f == 20.0
    assert s.forecast_var == q == 425.0
    assert (s.level, s.trend) == pytest.approx(tuple(m))
    assert s.lower == 20.0 - 2 * np.sqrt(425.0)


def test_second_step_evolves(prior):
    x = ObservedSeries([30.0, 31, 29, 32, 30])
    res = forecast_series(prior, V, x)
    s1, s2 = res.steps[:2]
    C1 = np.array([[400.0 * 25 / 425, 0], [0, 9.0]])
    R = G @ C1 @ G.T + evolution_covariance(0.04, 0.01)
    assert s2.forecast_mean == pytest.approx(s1.level + s1.trend)
    assert s2.forecast_var == pytest.approx(R[0, 0] + 25.0)


def test_evolution_covariance_ordering():
    W = evolution_covariance(0.04, 0.01)
    assert np.array_equal(W, np.array([[0.05, 0.01], [0.01, 0.01]]))


def test_noiseless_trend_is_tracked():
    a, b = 3.0, 0.5
    t = np.arange(1, 41)
    spec = PriorSpec(a + b, 0.0, b, 0.0, (1.0, 1.0, 1.0), (0, 0, 0), (0, 0, 0))
    res = forecast_series(spec, (1e-12, 1e-12, 1e-12), ObservedSeries(a + b * t))
    assert max(abs(s.forecast_mean - s.observed) for s in res.steps) < 1e-6


def test_rejects_bad_variances(prior):
    x = ObservedSeries(np.zeros(6))
    for v in ((0, 1, 1), (1, -1, 1), (1, 1, 0)):
        with pytest.raises(ValueError):
            forecast_series(prior, v, x)
    with pytest.raises(ValueError):
        forecast_series(prior, V, x, burn_in=-1)


def test_step_invariants(prior):
    x = simulate_series(SimConfig(prior, T=300, seed=12))
    res = forecast_series(prior, V, x)
    for s in res.steps:
        assert s.forecast_var >= V[0]
        assert s.lower < s.upper
        assert s.inside == (s.lower <= s.observed <= s.upper)
    inside = res.column("inside")[10:]
    assert res.coverage == inside.mean()


def test_burn_in_past_end(prior):
    res = forecast_series(prior, V, ObservedSeries(np.zeros(6)), burn_in=10)
    assert np.isnan(res.coverage)


@given(st.integers(0, 10_000), st.floats(1.01, 10.0))
def test_wider_v1_widens_every_interval(seed, factor):
    prior = PriorSpec(20, 400, 0, 9, V, (25, 1, 0.04), (1250, 0.0032, 0.0002))
    x = simulate_series(SimConfig(prior, T=60, seed=seed))
    a = forecast_series(prior, V, x)
    b = forecast_series(prior, (V[0] * factor, V[1], V[2]), x)
    assert np.all(b.column("forecast_var") > a.column("forecast_var"))


@given(st.integers(0, 10_000))
def test_joseph_form_agrees(seed):
    prior = PriorSpec(20, 400, 0, 9, V, (25, 1, 0.04), (1250, 0.0032, 0.0002))
    x = simulate_series(SimConfig(prior, T=200, seed=seed))
    a = forecast_series(prior, V, x)
    b = forecast_series(prior, V, x, joseph=True)
    for col in ("forecast_mean", "forecast_var", "level", "trend"):
        np.testing.assert_allclose(a.column(col), b.column(col), rtol=1e-8, atol=1e-8)
