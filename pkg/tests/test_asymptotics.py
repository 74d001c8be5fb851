import cmath

import numpy as np
import pytest

from quasithermo.asymptotics import (
    FluctuationSeries,
    check_cocycle_N,
    make_transfer_spec,
    oscillatory_integral,
    remainder_slope,
    stationary_phase_coeffs,
    transfer_series,
)
from quasithermo.errors import DegenerateHessian, MultipleStationaryPoints
from quasithermo.manifold import Box, ChartFunction, FocalChartSpec, legendre_transform, quadratic_chart

CHART = FocalChartSpec(2, ())
TOY_A = np.array([[2.0, 0.5], [0.5, -1.5]])
TOY_B = np.array([0.3, -0.2])


def _toy_series():
    phase = quadratic_chart(CHART, TOY_A, TOY_B)
    t1 = lambda z: 0.3 * z[0] - 0.2 * z[1] + 0.1 * z[0] ** 2 - 0.05 * z[0] * z[1] + 0.02 * z[1] ** 2
    t2 = lambda z: 0.2 * z[0] + 0.1 * z[1]
    return FluctuationSeries(phase, (t1, t2))


def _quartic_phase():
    return ChartFunction(
        CHART,
        lambda z: z[0] ** 2 / 2 + 0.1 * z[0] ** 4 + z[1],
        lambda z: np.array([z[0] + 0.4 * z[0] ** 3, 1.0]),
        lambda z: np.array([[1 + 1.2 * z[0] ** 2, 0.0], [0.0, 0.0]]),
        reference=[0.0, 1.0],
    )


def test_gaussian_quadrature_matches_closed_form():
    a, p, eps = 1.3, 0.4, 0.2
    phase = quadratic_chart(CHART, np.diag([a, 0.0]))
    spec = make_transfer_spec(phase, {1}, reference_point=[p, 0.0], box=Box([-9], [9]))
    amp = lambda z: np.exp(-z[0] ** 2 / 2)
    got = oscillatory_integral(phase, amp, spec, eps, [p, 0.0])
    # int exp(-u^2/2 + i(a u^2/2 - p u)/eps) du, then the (2 pi eps)^(-1/2) normalisation
    q = 1 - 1j * a / eps
    want = cmath.sqrt(2 * np.pi / q) * cmath.exp(-((p / eps) ** 2) / (2 * q)) / np.sqrt(2 * np.pi * eps)
    assert abs(got - want) <= 1e-6 * abs(want)


def test_quadratic_phase_constant_amplitude_has_no_first_correction():
    phase = quadratic_chart(CHART, np.diag([2.0, 1.0]))
    terms = stationary_phase_coeffs(phase, lambda z: 1.0, 1, [0.7, 0.2], to_chart={1})
    assert terms.order0 == pytest.approx(2.0**-0.5, rel=1e-12)
    assert abs(terms.order1) <= 1e-8
    assert terms.maslov == 1


def test_zero_amplitude_gives_zero_terms():
    phase = _quartic_phase()
    spec = make_transfer_spec(phase, {1}, reference_point=[0.0, 1.0])
    terms = stationary_phase_coeffs(phase, lambda z: 0.0, 1, [0.3, 1.0], spec=spec)
    assert terms.order0 == 0
    assert abs(terms.order1) <= 1e-12


def test_quartic_first_correction_closed_form():
    # Gaussian amplitude at the origin: V1 = -f''/2 + f phi4 / 8 = 1/2 + 2.4/8
    phase = _quartic_phase()
    spec = make_transfer_spec(phase, {1}, reference_point=[0.0, 1.0])
    terms = stationary_phase_coeffs(phase, lambda z: np.exp(-z[0] ** 2 / 2), 1, [0.0, 1.0], spec=spec)
    assert terms.order0.real == pytest.approx(1.0, abs=1e-10)
    assert terms.order1.real == pytest.approx(0.8, abs=1e-5)


def test_remainder_slope_of_quartic_phase():
    phase = _quartic_phase()
    amp = lambda z: np.exp(-z[0] ** 2 / 2)
    spec = make_transfer_spec(phase, {1}, reference_point=[0.0, 1.0], box=Box([-8], [8]))
    terms = stationary_phase_coeffs(phase, amp, 1, [0.0, 1.0], spec=spec)
    eps = (0.1, 0.05, 0.025, 0.0125)
    res = [abs(oscillatory_integral(phase, amp, spec, e, [0.0, 1.0]) - terms.approximation(e)) for e in eps]
    assert remainder_slope(eps, res) >= 1.8


def test_order0_phase_is_numerical_legendre():
    src = _toy_series()
    out = transfer_series(src, make_transfer_spec(src.phase, {1})).series
    leg = legendre_transform(src.phase, set(), {1})
    for z in np.random.default_rng(4).uniform(-1, 1, (5, 2)):
        assert out.phase(z) == pytest.approx(leg(z), abs=1e-8)


def test_toy_cocycle_orders_zero_and_one():
    src = _toy_series()
    samples = np.random.default_rng(1).uniform(-1, 1, (5, 2))
    res = check_cocycle_N(src, (), {1}, {2}, samples)
    assert max(res[:3]) <= 1e-6


def test_round_trip_restores_tails():
    src = _toy_series()
    there = transfer_series(src, make_transfer_spec(src.phase, {1})).series
    back = transfer_series(there, make_transfer_spec(there.phase, ())).series
    for z in np.random.default_rng(5).uniform(-1, 1, (3, 2)):
        np.testing.assert_allclose(back.coefficients(z)[:3], src.coefficients(z)[:3], atol=1e-6)


def test_identity_transfer_is_noop():
    src = _toy_series()
    assert transfer_series(src, make_transfer_spec(src.phase, ())).series is src


def test_tabulated_transfer_diagnostics():
    src = _toy_series()
    axes = (np.linspace(-0.5, 0.5, 3), np.linspace(-0.5, 0.5, 3))
    result = transfer_series(src, make_transfer_spec(src.phase, {1}), target_axes=axes)
    assert result.series_out.shape == (3, 3)
    assert result.diagnostics["legendre_residual"] <= 1e-8
    assert result.diagnostics["min_order0_multiplier"] > 0


def test_degenerate_hessian_detected():
    phase = quadratic_chart(CHART, np.diag([0.0, 1.0]))
    with pytest.raises(DegenerateHessian):
        make_transfer_spec(phase, {1}, reference_point=[0.0, 0.0])


def test_multiple_stationary_points_reported():
    phase = ChartFunction(
        CHART,
        lambda z: z[0] ** 3 / 3 + z[1] ** 2,
        lambda z: np.array([z[0] ** 2, 2 * z[1]]),
        lambda z: np.array([[2 * z[0], 0.0], [0.0, 2.0]]),
        reference=[1.0, 0.0],
    )
    spec = make_transfer_spec(phase, {1}, reference_point=[1.0, 0.0])
    with pytest.raises(MultipleStationaryPoints):
        stationary_phase_coeffs(phase, lambda z: 1.0, 0, [1.0, 0.0], spec=spec, check_box=Box([-2], [2]))


def test_order_above_one_rejected():
    phase = quadratic_chart(CHART, np.diag([1.0, 1.0]))
    with pytest.raises(ValueError):
        stationary_phase_coeffs(phase, lambda z: 1.0, 2, [0.0, 0.0], to_chart={1})
