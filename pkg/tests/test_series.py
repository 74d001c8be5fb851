import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from quasithermo.errors import NonPositiveLeadingCoefficient
from quasithermo.series import SeriesField, TruncatedSeries, compositions, exp_coeffs, log_coeffs, series_arith

xi = sp.Symbol("xi")


def _taylor_oracle(expr, K):
    """Derivatives of ``expr`` at xi = 0 by symbolic differentiation."""
    return [float(sp.diff(expr, xi, m).subs(xi, 0)) for m in range(K + 1)]


def _poly(coeffs):
    return sum(sp.Float(c, 30) * xi**m / sp.factorial(m) for m, c in enumerate(coeffs))


coeff = st.floats(-1.0, 1.0, allow_nan=False)
EPS = np.finfo(float).eps


def test_exp_of_zero_series():
    assert exp_coeffs(TruncatedSeries([0, 0, 0, 0])).coeffs == (1.0, 0.0, 0.0, 0.0)


def test_exp_of_identity_gives_all_ones():
    np.testing.assert_allclose(exp_coeffs(TruncatedSeries([0, 1, 0, 0])).as_array(), [1, 1, 1, 1], atol=0)


def test_log_of_unit():
    assert log_coeffs(TruncatedSeries([1, 0, 0, 0])).coeffs == (0.0, 0.0, 0.0, 0.0)


def test_log_of_shifted_exponential():
    e = math.e
    b = log_coeffs(TruncatedSeries([e, e, e, e]))
    np.testing.assert_allclose(b.as_array(), [1, 1, 0, 0], atol=1e-14)
    assert b.as_array() == pytest.approx(_taylor_oracle(sp.log(sp.E * sp.exp(xi)), 3), abs=1e-14)


def test_log_rejects_non_positive_leading_coefficient():
    with pytest.raises(NonPositiveLeadingCoefficient):
        log_coeffs(TruncatedSeries([0.0, 1.0]))
    with pytest.raises(NonPositiveLeadingCoefficient):
        log_coeffs(TruncatedSeries([-2.0, 1.0]))


@pytest.mark.parametrize("seed", range(5))
def test_exp_matches_symbolic_oracle(seed):
    rng = np.random.default_rng(seed)
    b = rng.uniform(-1, 1, 7)
    want = _taylor_oracle(sp.exp(_poly(b)), 6)
    got = exp_coeffs(TruncatedSeries(b)).as_array()
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_log_matches_symbolic_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    a = rng.uniform(-1, 1, 7)
    a[0] = rng.uniform(0.5, 2.0)
    want = _taylor_oracle(sp.log(_poly(a)), 6)
    got = log_coeffs(TruncatedSeries(a)).as_array()
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-13)


def test_compositions_count_and_sum():
    for m in range(1, 9):
        for p in range(1, m + 1):
            parts = compositions(m, p)
            assert len(parts) == math.comb(m - 1, p - 1)
            assert all(sum(c) == m and min(c) >= 1 for c in parts)
    assert compositions(3, 0) == ()


@settings(max_examples=100, deadline=None)
@given(st.lists(coeff, min_size=1, max_size=9))
def test_log_inverts_exp(b):
    a = exp_coeffs(TruncatedSeries(b)).as_array()
    back = log_coeffs(TruncatedSeries(a)).as_array()
    # every term of log(a0 - |tail|) has one sign, so this is the no-cancellation size
    mag = np.abs(log_coeffs(TruncatedSeries([a[0], *-np.abs(a[1:])])).as_array())
    assert np.all(np.abs(back - b) <= np.maximum(1e-10, 1e3 * EPS * mag))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 3.0), st.lists(coeff, min_size=0, max_size=8))
def test_exp_inverts_log(a0, tail):
    a = [a0, *tail]
    l = log_coeffs(TruncatedSeries(a)).as_array()
    back = exp_coeffs(TruncatedSeries(l)).as_array()
    # small a0 with a large tail makes the log coefficients factorially large and
    # the exp sums cancel down to O(1); bound by the same sums taken in absolute value
    mag = exp_coeffs(TruncatedSeries([l[0], *np.abs(l[1:])])).as_array()
    assert np.all(np.abs(back - np.asarray(a)) <= np.maximum(1e-10, 1e3 * EPS * mag))


@settings(max_examples=60, deadline=None)
@given(st.lists(coeff, min_size=1, max_size=7), st.lists(coeff, min_size=1, max_size=7))
def test_exp_turns_sums_into_products(b1, b2):
    s1, s2 = TruncatedSeries(b1), TruncatedSeries(b2)
    lhs = exp_coeffs(series_arith(s1, s2, "add"))
    rhs = series_arith(exp_coeffs(s1), exp_coeffs(s2), "mul")
    assert lhs.order == rhs.order == min(s1.order, s2.order)
    np.testing.assert_allclose(lhs.as_array(), rhs.as_array(), atol=1e-10)


def test_arith_examples():
    assert series_arith([1, 0], [1, 0], "mul").coeffs == (1.0, 0.0)
    # xi * xi = xi**2 = 2 * xi**2 / 2!
    assert series_arith([0, 1, 0], [0, 1, 0], "mul").coeffs == (0.0, 0.0, 2.0)
    assert series_arith([1, 2, 3], [1, -2, -3], "add").coeffs == (2.0, 0.0, 0.0)
    assert series_arith([1, 2], 3.0, "scale").coeffs == (3.0, 6.0)
    with pytest.raises(ValueError):
        series_arith([1], [1], "div")


def test_product_matches_symbolic_multiplication():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=5), rng.normal(size=5)
    want = _taylor_oracle(sp.expand(_poly(a) * _poly(b)), 4)
    np.testing.assert_allclose(series_arith(a, b, "mul").as_array(), want, rtol=1e-12)


def test_truncation_never_extends():
    s = TruncatedSeries([1, 2, 3]) + TruncatedSeries([1, 1])
    assert s.order == 1
    with pytest.raises(ValueError):
        TruncatedSeries([1, 2]).truncate(3)


def test_invalid_coefficients_rejected():
    with pytest.raises(ValueError):
        TruncatedSeries([])
    with pytest.raises(ValueError):
        TruncatedSeries([1.0, float("nan")])


def test_evaluate_uses_factorial_convention():
    s = TruncatedSeries([1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1])
    assert s.evaluate(0.5) == pytest.approx(math.exp(0.5), rel=1e-9)


def test_series_field_shape_checked():
    axes = (np.linspace(0, 1, 3), np.linspace(0, 1, 4))
    SeriesField(axes, np.zeros((3, 4, 2)))
    with pytest.raises(ValueError):
        SeriesField(axes, np.zeros((4, 3, 2)))
