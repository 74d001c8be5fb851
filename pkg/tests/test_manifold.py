import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasithermo.errors import DomainError, QuasithermoError
from quasithermo.manifold import (
    Box,
    FocalChartSpec,
    check_cocycle_L,
    glue_map,
    homogeneity_residual,
    ideal_gas_manifold,
    lagrangian_residual,
    legendre_transform,
    manifold_point,
    quadratic_chart,
    symplectic_residual,
    tau_inverse,
    tau_map,
)

C_V = 1.5
R = 1.0


def _ideal_gas_beta_chart(beta, V, nu, c=C_V, s0=0.0):
    """Closed-form generating function of the ideal gas on the chart with intensive first slot."""
    return nu * (c * np.log(c / beta) + R * np.log(V / nu) + s0 - c)


def test_chart_spec_validation():
    FocalChartSpec(3, {1, 3})
    with pytest.raises(ValueError):
        FocalChartSpec(3, {0})
    with pytest.raises(ValueError):
        FocalChartSpec(2, {1, 2})
    assert FocalChartSpec(3, {2}).labels() == ["x1", "y2", "x3"]


def test_half_square_goes_to_negative_half_square():
    f = quadratic_chart(FocalChartSpec(2, ()), np.diag([1.0, 2.0]))
    g = legendre_transform(f, set(), {1})
    for y1, x2 in [(0.3, -0.2), (-1.5, 0.7), (2.0, 1.0)]:
        assert g([y1, x2]) == pytest.approx(-0.5 * y1**2 + x2**2, abs=1e-12)


def test_identity_transform_returns_same_function():
    f = ideal_gas_manifold(C_V)
    assert legendre_transform(f, set(), set()) is f
    assert check_cocycle_L(f, set(), set(), set(), [[1.0, 1.0, 1.0]]) == 0.0


def test_wrong_source_chart_rejected():
    f = ideal_gas_manifold(C_V)
    with pytest.raises(ValueError):
        legendre_transform(f, {1}, set())


def test_ideal_gas_energy_to_inverse_temperature():
    f = ideal_gas_manifold(C_V)
    g = legendre_transform(f, set(), {1})
    rng = np.random.default_rng(3)
    for beta, V, nu in Box([0.5, 0.5, 0.5], [2.0, 2.0, 2.0]).sample(20, rng):
        assert g([beta, V, nu]) == pytest.approx(_ideal_gas_beta_chart(beta, V, nu), abs=1e-10)
        # the recovered extensive coordinate is the caloric equation of state
        p = manifold_point(g, [beta, V, nu])
        assert p.x[0] == pytest.approx(C_V * nu / beta, rel=1e-6)


def test_quadratic_cocycle_is_exact():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 3))
    A = M @ M.T + 3 * np.eye(3)
    f = quadratic_chart(FocalChartSpec(3, ()), A, linear=[0.1, -0.2, 0.3], constant=0.5)
    samples = rng.uniform(-1, 1, (20, 3))
    assert check_cocycle_L(f, set(), {1}, {1, 3}, samples) <= 1e-12
    assert check_cocycle_L(f, set(), {2}, {1}, samples) <= 1e-12


def test_ideal_gas_cocycle():
    f = ideal_gas_manifold(C_V)
    samples = Box([0.5] * 3, [2.0] * 3).sample(10, np.random.default_rng(1))
    assert check_cocycle_L(f, set(), {1}, {1, 3}, samples) <= 1e-8


def test_glue_map_gives_caloric_equation():
    f = ideal_gas_manifold(C_V)
    E, V, nu = 2.0, 1.3, 0.8
    beta = glue_map(f, set(), {1}, [E, V, nu])
    np.testing.assert_allclose(beta, [C_V * nu / E, V, nu], rtol=1e-12)
    back = glue_map(f, {1}, set(), beta)
    np.testing.assert_allclose(back, [E, V, nu], rtol=1e-8)


def test_glue_map_same_chart_is_copy():
    f = ideal_gas_manifold(C_V)
    p = np.array([1.0, 1.0, 1.0])
    out = glue_map(f, set(), set(), p)
    assert out is not p
    np.testing.assert_array_equal(out, p)


coordinate = st.floats(-3.0, 3.0, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(coordinate, min_size=6, max_size=6))
def test_tau_round_trip(v):
    v = np.array(v)
    np.testing.assert_allclose(tau_inverse(tau_map(v)), v, atol=1e-12)
    np.testing.assert_allclose(tau_map(tau_inverse(v)), v, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(coordinate, min_size=6, max_size=6))
def test_tau_is_symplectic(v):
    assert symplectic_residual(tau_map, np.array(v)) <= 1e-8
    assert symplectic_residual(tau_inverse, np.array(v)) <= 1e-8


def test_symplectic_residual_detects_scaling():
    assert symplectic_residual(lambda v: 2 * v, np.ones(4)) > 1.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.3, 4.0))
def test_ideal_gas_degree_one_homogeneous(E, V, nu, rho):
    f = ideal_gas_manifold(C_V)
    assert homogeneity_residual(f, [[E, V, nu]], rho) <= 1e-12


def test_homogeneity_survives_legendre():
    g = legendre_transform(ideal_gas_manifold(C_V), set(), {1})
    samples = Box([0.5] * 3, [2.0] * 3).sample(5, np.random.default_rng(2))
    assert homogeneity_residual(g, samples, 1.7) <= 1e-9


def test_lagrangian_residual_vanishes():
    f = ideal_gas_manifold(C_V)
    g = legendre_transform(f, set(), {1, 3})
    assert lagrangian_residual(f, [1.2, 0.9, 1.1]) <= 1e-8
    assert lagrangian_residual(g, [1.2, 0.9, 0.4]) <= 1e-6


def test_lagrangian_residual_detects_non_gradient_field():
    from quasithermo.manifold import ChartFunction

    # a gradient with asymmetric Jacobian cannot come from a potential
    chart = FocalChartSpec(2, ())
    f = ChartFunction(chart, lambda z: 0.0, gradient=lambda z: np.array([z[1], -z[0]]))
    assert lagrangian_residual(f, [0.3, 0.4]) > 1.0


def test_domain_error_outside_positive_orthant():
    f = ideal_gas_manifold(C_V)
    with pytest.raises(DomainError):
        f([-1.0, 1.0, 1.0])
    g = legendre_transform(f, set(), {1})
    with pytest.raises(QuasithermoError):
        g([-0.5, 1.0, 1.0])


def test_ideal_gas_rejects_bad_parameters():
    with pytest.raises(ValueError):
        ideal_gas_manifold(-1.0)
    with pytest.raises(ValueError):
        ideal_gas_manifold(1.5, d=3)
