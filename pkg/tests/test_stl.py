import numpy as np
import pytest
from hypothesis import given, strategies as st

from lstmcluster.stl import decompose, loess, nextodd, periodic_means, stl_decompose, trend_span


def _signal(n, period, seed=0, slope=0.1):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=period)
    s -= s.mean()
    t = np.arange(n)
    return slope * t, s[t % period]


@pytest.mark.parametrize("n, period", [(24, 12), (60, 12), (103, 12), (28, 7), (50, 4)])
def test_noiseless_recovery(n, period):
    tr, se = _signal(n, period)
    d = stl_decompose(tr + se, period)
    assert np.max(np.abs(d.seasonal - se)) < 1e-6
    assert np.max(np.abs(d.trend - tr)) < 1e-6
    assert np.max(np.abs(d.remainder)) < 1e-6


def test_constant_series():
    d = stl_decompose(np.full(36, 3.5), 12)
    assert np.allclose(d.seasonal, 0, atol=1e-12)
    assert np.allclose(d.trend, 3.5, atol=1e-12)
    assert np.allclose(d.remainder, 0, atol=1e-12)


@given(st.integers(2, 12), st.integers(0, 10_000), st.integers(0, 40))
def test_additive_identity_and_periodicity(period, seed, extra):
    n = 2 * period + extra
    x = np.random.default_rng(seed).normal(size=n)
    d = stl_decompose(x, period)
    assert np.max(np.abs(d.trend + d.seasonal + d.remainder - x)) <= 1e-12
    assert np.array_equal(d.seasonal[period:], d.seasonal[:-period])
    assert abs(d.seasonal[:period].sum()) < 1e-9


def test_too_short_raises():
    with pytest.raises(ValueError):
        stl_decompose(np.arange(23.0), 12)


def test_short_series_fallback():
    x = np.arange(20.0)
    d = decompose(x, 12)
    assert np.all(d.seasonal == 0)
    assert np.allclose(d.trend, x)             # local-linear loess is exact on a line


def test_loess_reproduces_lines():
    x = 3.0 - 0.25 * np.arange(40)
    for span in (3, 7, 19, 41, 101):
        assert np.allclose(loess(x, span), x, atol=1e-12)


def test_span_and_nextodd():
    assert nextodd(4) == 5 and nextodd(5) == 5 and nextodd(4.2) == 5
    assert trend_span(12, 100) == 19
    assert trend_span(7, 100) == 11


def test_periodic_means_centered():
    x = np.arange(10.0)
    s = periodic_means(x, 3)
    assert abs(s[:3].sum()) < 1e-12
    assert np.array_equal(s[3:], s[:-3])


def test_seasonal_at_extends_past_end():
    tr, se = _signal(36, 12)
    d = stl_decompose(tr + se, 12)
    assert np.allclose(d.seasonal_at(np.arange(36, 48)), d.seasonal[24:36])
