import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from quasithermo.errors import GridTooCoarse, GridTooLarge, NonPositiveOperator, NotTwoSubsystems
from quasithermo.fields import Grid
from quasithermo.wigner import (
    PAIR_STATE_COEFFS,
    WavePacket,
    cat_packet,
    chsh_scan,
    chsh_value,
    gaussian_packet,
    h_functional,
    hermite_function,
    moyal_bracket,
    negativity_volume,
    pair_correlated_packet,
    pair_state_correlator,
    poisson_bracket,
    star_product,
    star_product_grid,
    star_terms,
    weyl_grid,
    weyl_quantize,
    wigner_transform,
)

X1, J1 = sp.symbols("X1 J1")
KB = sp.Symbol("k_B", positive=True)


@pytest.fixture(scope="module")
def pair_field():
    return wigner_transform(pair_correlated_packet(), Grid([-5] * 4, [5] * 4, 24))


@pytest.fixture(scope="module")
def product_field():
    ground = hermite_function(0)
    return wigner_transform(WavePacket(2, 1.0, modes=[(1.0, ground, ground)]), Grid([-5] * 4, [5] * 4, 24))


def test_gaussian_wigner_closed_form():
    g = Grid([-5, -5], [5, 5], 100)
    W = wigner_transform(gaussian_packet(), g)
    X, J = g.mesh()
    assert np.max(np.abs(W.values - np.exp(-(X**2) - J**2) / np.pi)) <= 1e-6
    assert np.max(np.abs(W.marginal_X() - np.exp(-g.axes[0] ** 2) / np.sqrt(np.pi))) <= 1e-6
    assert W.meta["imag_residual"] <= 1e-12


def test_displaced_packet_with_momentum():
    hbar = 0.5
    g = Grid([-4, -4], [4, 4], 80)
    W = wigner_transform(gaussian_packet(center=0.5, width=math.sqrt(hbar), momentum=-0.7, hbar=hbar), g)
    X, J = g.mesh()
    # a coherent state (width^2 = hbar) has a product-Gaussian Wigner function
    want = np.exp(-((X - 0.5) ** 2 + (J + 0.7) ** 2) / hbar) / (math.pi * hbar)
    assert np.max(np.abs(W.values - want)) <= 1e-6


def test_coarse_grid_rejected():
    with pytest.raises(GridTooCoarse):
        wigner_transform(gaussian_packet(), Grid([-1, -1], [1, 1], 8))


def test_cat_state_negativity_shrinks_under_diffusion():
    W = wigner_transform(cat_packet(2.0), Grid([-6, -5], [6, 5], 120))
    vols = [negativity_volume(W.diffused(t)).volume for t in (0.0, 0.01, 0.05, 0.1, 0.2)]
    assert vols[0] > 1e-3
    assert all(b <= a + 1e-12 for a, b in zip(vols, vols[1:]))
    witness = negativity_volume(W, lambda a, b: np.exp(-(a**2 + b**2) / 0.1))
    assert witness.witness < 0
    assert abs(witness.witness_center[0]) <= 0.2


def test_gaussian_has_no_negativity():
    W = wigner_transform(gaussian_packet(), Grid([-5, -5], [5, 5], 60))
    assert negativity_volume(W).volume <= 1e-12


def test_product_state_respects_bell_bound(product_field):
    assert chsh_scan(product_field, 20).max_S <= 2 + 1e-6


def test_pair_state_violates_bell_bound(pair_field):
    scan = chsh_scan(pair_field, 20)
    assert scan.violates
    assert scan.max_S <= 2 * math.sqrt(2) + 1e-3
    assert chsh_value(pair_field, scan.best_settings) == pytest.approx(scan.max_S, abs=1e-12)


def test_correlators_match_operator_oracle(pair_field):
    angles = np.linspace(0, np.pi, 20, endpoint=False)
    E = chsh_scan(pair_field, angles).correlators
    oracle = np.array([[pair_state_correlator(PAIR_STATE_COEFFS, a, b) for b in angles] for a in angles])
    # sign binning on 24 cells per axis limits agreement to about 2e-2
    assert np.max(np.abs(E - oracle)) <= 2.5e-2


def test_chsh_requires_two_subsystems():
    W = wigner_transform(gaussian_packet(), Grid([-5, -5], [5, 5], 40))
    with pytest.raises(NotTwoSubsystems):
        chsh_scan(W, 4)


def test_weyl_identity_and_position():
    g = weyl_grid(64, 8.0, 1.0)
    np.testing.assert_allclose(weyl_quantize(lambda X, P: 1 + 0 * X, g, 1.0), np.eye(64), atol=1e-12)
    np.testing.assert_allclose(weyl_quantize(lambda X, P: X + 0 * P, g, 1.0), np.diag(g.axes[0]), atol=1e-12)


def test_weyl_gaussian_eigenvalues():
    n, hbar, kap = 64, 1.0, 0.8
    g = weyl_grid(n, 8.0, hbar)
    A = weyl_quantize(lambda X, P: np.exp(-kap * (X**2 + P**2) / 2), g, hbar)
    mu = np.sort(np.linalg.eigvalsh(A))[::-1]
    # Weyl image of a Gaussian is a thermal oscillator state with ratio (1-r)/(1+r)
    r = kap * hbar / 2
    want = ((1 - r) / (1 + r)) ** np.arange(20) / (1 + r)
    assert np.max(np.abs(mu[:20] - want)) <= 1e-8


def test_weyl_grid_too_large():
    with pytest.raises(GridTooLarge):
        weyl_quantize(lambda X, P: X + 0 * P, weyl_grid(130, 8.0, 1.0), 1.0)


def test_h_functional_values():
    assert h_functional(np.diag([0.5, 0.5])) == pytest.approx(math.log(0.5), abs=1e-15)
    assert h_functional(np.diag([1.0, 0.0])) == 0.0
    with pytest.raises(NonPositiveOperator):
        h_functional(np.diag([1.2, -0.2]))


def test_h_functional_unitary_invariance():
    rng = np.random.default_rng(0)
    mu = rng.random(6)
    mu /= mu.sum()
    Z = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    U, _ = np.linalg.qr(Z)
    rho = U @ np.diag(mu) @ U.conj().T
    assert h_functional(rho) == pytest.approx(float(np.sum(mu * np.log(mu))), abs=1e-12)


def test_h_functional_of_phase_space_gaussian():
    n, L = 48, 8.0
    # square box: momentum half-width pi hbar / h equals L
    hbar = L * (2 * L / n) / math.pi
    g = weyl_grid(n, L, hbar)
    X, P = g.mesh()
    var = 2.0
    f = np.exp(-(X**2 + P**2) / (2 * var))
    # thermal oscillator state: var = hbar (2 nbar + 1) / 2
    nbar = var / hbar - 0.5
    want = -((nbar + 1) * math.log(nbar + 1) - nbar * math.log(nbar))
    assert h_functional(f, g, hbar) == pytest.approx(want, abs=1e-6)


def test_star_product_canonical_pair():
    assert sp.simplify(moyal_bracket(X1, J1) + 1) == 0
    assert sp.expand(star_product(X1, J1) - star_product(J1, X1)) == sp.expand(-sp.I * KB)
    assert poisson_bracket(X1, J1) == -1


def test_star_product_unit_and_first_term_antisymmetry():
    f = X1**2 * J1 + 3 * J1
    g = X1 * J1**3 - X1
    assert sp.expand(star_product(f, 1) - f) == 0
    B_fg = star_terms(f, g, 1)[1]
    B_gf = star_terms(g, f, 1)[1]
    assert sp.expand(B_fg + B_gf) == 0
    assert sp.expand(B_fg - sp.I / 2 * poisson_bracket(f, g)) == 0


def test_moyal_bracket_is_poisson_for_quadratics():
    H = J1**2 / 2 + 3 * X1**2 / 2 + X1 * J1
    for g in (X1, J1, X1**2):
        assert sp.simplify(moyal_bracket(H, g) - poisson_bracket(H, g)) == 0


small = st.integers(-2, 2)


def _cubic(cs):
    monos = [1, X1, J1, X1**2, X1 * J1, J1**2, X1**3, X1**2 * J1, X1 * J1**2, J1**3]
    return sum(c * m for c, m in zip(cs, monos))


@settings(max_examples=10, deadline=None)
@given(st.lists(small, min_size=10, max_size=10), st.lists(small, min_size=10, max_size=10), st.lists(small, min_size=10, max_size=10))
def test_star_product_associative_through_second_order(a, b, c):
    f, g, h = _cubic(a), _cubic(b), _cubic(c)
    lhs = sp.Poly(star_product(star_product(f, g), h), KB)
    rhs = sp.Poly(star_product(f, star_product(g, h)), KB)
    for s in range(3):
        assert sp.expand(lhs.coeff_monomial(KB**s) - rhs.coeff_monomial(KB**s)) == 0


def test_grid_star_product_of_linear_functions():
    g = Grid([-1, -1], [1, 1], 21)
    X, J = g.mesh()
    out = star_product_grid(X, J, g, order=2, k_B=0.3)
    np.testing.assert_allclose(out, X * J - 0.5j * 0.3, atol=1e-12)
