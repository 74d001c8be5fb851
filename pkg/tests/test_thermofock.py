import math

import numpy as np
import pytest
import sympy as sp

from quasithermo.errors import DimensionExplosion, NonHermitianKernel, StepTooLarge, WeightOverflow
from quasithermo.evolution import PhaseSpaceModel, fp_phase_space_evolve, phase_space_cfl_limit
from quasithermo.fields import Grid, StateField
from quasithermo.thermofock import (
    FockModel,
    FockSpace,
    FockVector,
    PhaseCellBasis,
    build_ccr,
    build_kinetic_generator,
    density_F,
    evolve_R,
    extrapolate_epsilon,
    free_transport_preset,
    generating_Z,
    generator_norm_bound,
    harmonic_preset,
    hierarchy_residual,
    one_particle_state,
    particle_number,
    phase_symbols,
    quartic_coupling_preset,
)


def _basis(n, L=5.0):
    return PhaseCellBasis(Grid((-L, -L), (L, L), n, periodic=True))


def _packet(grid):
    X, J = grid.mesh()
    F0 = np.exp(-((X - 1) ** 2 + J**2) / 2)
    return F0 / (F0.sum() * grid.cell_volume)


def _safe_dt(K):
    return 0.09 / generator_norm_bound(K)


def test_ccr_single_mode():
    ccr = build_ccr(1, 3, delta=0.5)
    a = ccr.a(0).toarray()
    ad = ccr.adag(0).toarray()
    comm = a @ ad - ad @ a
    # exact below the top shell, which leaks out of the truncated space
    np.testing.assert_allclose(np.diag(comm)[:3], 1 / 0.5, atol=1e-12)
    np.testing.assert_allclose(comm - np.diag(np.diag(comm)), 0, atol=1e-12)


def test_creators_commute():
    ccr = build_ccr(3, 2)
    # mixed commutators only hold on states below the truncated top shell
    below = [i for i, s in enumerate(ccr.space.states) if sum(s) < 2]
    for k in range(3):
        for l in range(3):
            c = (ccr.adag(k) @ ccr.adag(l) - ccr.adag(l) @ ccr.adag(k)).toarray()
            assert np.max(np.abs(c)) <= 1e-12
            if k != l:
                m = (ccr.a(k) @ ccr.adag(l) - ccr.adag(l) @ ccr.a(k)).toarray()
                assert np.max(np.abs(m[:, below])) <= 1e-12


def test_number_operator_eigenvalues():
    ccr = build_ccr(2, 3, delta=0.25)
    N = sum(0.25 * (ccr.adag(k) @ ccr.a(k)) for k in range(2)).toarray()
    want = [sum(s) for s in ccr.space.states]
    np.testing.assert_allclose(np.diag(N), want, atol=1e-12)
    np.testing.assert_allclose(ccr.number_operator().diagonal(), want)


def test_fock_space_dimension_guard():
    assert FockSpace(4, 2).dim == math.comb(6, 2)
    with pytest.raises(DimensionExplosion):
        FockSpace(256, 2)


def test_constant_hamiltonian_has_no_transport():
    model = FockModel(_basis(4), [sp.Integer(3)], N_max=2)
    assert build_kinetic_generator(model).nnz == 0


def test_zero_coupling_reduces_to_one_body_generator():
    b = _basis(4)
    coupled = FockModel(b, quartic_coupling_preset(1, 1.0, 0.3), N_max=3, kappa=0.0)
    free = FockModel(b, harmonic_preset(1), N_max=3)
    diff = build_kinetic_generator(coupled) - build_kinetic_generator(free)
    assert (abs(diff).max() if diff.nnz else 0.0) == 0.0


def test_generator_is_antisymmetric():
    b = _basis(4)
    K = build_kinetic_generator(FockModel(b, quartic_coupling_preset(1, 1.0, 0.3), N_max=2, kappa=0.5))
    asym = K + K.T
    assert (abs(asym).max() if asym.nnz else 0.0) <= 1e-10 * abs(K).max()


def test_model_rejects_unknown_symbols_and_high_degree():
    X, J = phase_symbols(1)
    with pytest.raises(ValueError):
        FockModel(_basis(4), [X[0] ** 2 + sp.Symbol("z")])
    with pytest.raises(ValueError):
        FockModel(_basis(4), [X[0] ** 6])


def test_vacuum_has_zero_density():
    b = _basis(4)
    F = density_F(FockSpace(b.size, 1).vacuum(), b)
    assert np.all(F.values == 0)
    assert F.meta["particle_number"] == 0.0


def test_single_occupied_cell():
    b = _basis(4)
    space = FockSpace(b.size, 1)
    occ = [0] * b.size
    occ[5] = 1
    F = density_F(space.basis_vector(occ), b)
    assert F.values.ravel()[5] == pytest.approx(1 / b.delta)
    assert np.count_nonzero(F.values) == 1


def test_two_particle_state_counts_two():
    b = _basis(4)
    space = FockSpace(b.size, 2)
    occ = [0] * b.size
    occ[2] = 1
    occ[9] = 1
    mixed = np.zeros(space.dim)
    mixed[space.index[tuple(occ)]] = 0.6
    occ2 = [0] * b.size
    occ2[3] = 2
    mixed[space.index[tuple(occ2)]] = 0.8
    F = density_F(FockVector(space, mixed), b)
    assert np.sum(F.values) * b.delta == pytest.approx(2.0, abs=1e-12)
    assert particle_number(FockVector(space, mixed)) == pytest.approx(2.0)


def test_generating_function_variants():
    b = _basis(8)
    F = StateField(b.grid, _packet(b.grid))
    assert generating_Z(F, [0.0, 0.0]) == pytest.approx(1.0, abs=1e-12)
    assert generating_Z(F, [0.0], variant="laplace") == pytest.approx(1.0, abs=1e-12)
    # Laplace variant over X only: sum F exp(-u X)
    X, _ = b.grid.mesh()
    want = float(np.sum(F.values * np.exp(-0.3 * X)) * b.delta)
    assert generating_Z(F, [0.3, 0.0], variant="laplace") == pytest.approx(want, rel=1e-14)
    with pytest.raises(ValueError):
        generating_Z(F, [0.3, 0.1], variant="laplace")
    with pytest.raises(WeightOverflow):
        generating_Z(F, [-200.0], k_B=1.0, variant="laplace")


def test_relaxation_only_decays_exponentially():
    b = _basis(4)
    K = build_kinetic_generator(FockModel(b, [sp.Integer(0)], N_max=1))
    R0 = one_particle_state(FockSpace(b.size, 1), np.sqrt(_packet(b.grid)), b.delta)
    traj = evolve_R(K, R0, (0, 2), 0.01, epsilon=0.5)
    assert traj.norms[-1] == pytest.approx(math.exp(-1.0) * traj.norms[0], abs=1e-8)


def test_step_too_large():
    b = _basis(8)
    K = build_kinetic_generator(FockModel(b, harmonic_preset(1), N_max=1))
    R0 = one_particle_state(FockSpace(b.size, 1), np.sqrt(_packet(b.grid)), b.delta)
    with pytest.raises(StepTooLarge):
        evolve_R(K, R0, (0, 1), 2 * 0.1 / generator_norm_bound(K))


def test_number_and_norm_conserved_without_relaxation():
    b = _basis(8)
    K = build_kinetic_generator(FockModel(b, harmonic_preset(1), N_max=1))
    R0 = one_particle_state(FockSpace(b.size, 1), np.sqrt(_packet(b.grid)), b.delta)
    traj = evolve_R(K, R0, (0, 1), _safe_dt(K))
    assert np.ptp(traj.numbers) <= 1e-8
    assert np.ptp(traj.norms) <= 1e-8


@pytest.mark.filterwarnings("ignore::quasithermo.errors.NegativeDensityWarning")
def test_single_particle_sector_matches_liouville_transport():
    b = _basis(16)
    g = b.grid
    K = build_kinetic_generator(FockModel(b, harmonic_preset(1), N_max=1))
    F0 = _packet(g)
    traj = evolve_R(K, one_particle_state(FockSpace(b.size, 1), np.sqrt(F0), b.delta), (0, 1), _safe_dt(K))
    model = PhaseSpaceModel(1, lambda X: 0.5 * X**2)
    ref = fp_phase_space_evolve(StateField(g, F0), model, (0, 1), phase_space_cfl_limit(g, model)).final.values
    got = density_F(traj.final, b).values
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) <= 5e-2


def test_hierarchy_closes_for_free_and_coupled_models():
    b = _basis(4)
    free = FockModel(b, free_transport_preset(1), N_max=2, epsilon=0.2)
    K = build_kinetic_generator(free)
    r = FockVector(free.space, np.random.default_rng(0).normal(size=free.space.dim))
    assert hierarchy_residual(free, K, r)[0] <= 1e-10
    coupled = FockModel(b, quartic_coupling_preset(1, 1.0, 0.3), N_max=3, kappa=0.5, epsilon=0.1)
    Kc = build_kinetic_generator(coupled)
    rc = FockVector(coupled.space, np.random.default_rng(1).normal(size=coupled.space.dim))
    res, lhs, _ = hierarchy_residual(coupled, Kc, rc)
    assert res <= 1e-9 * max(1.0, np.max(np.abs(lhs)))


def test_non_antisymmetric_kernel_rejected(monkeypatch):
    import quasithermo.thermofock as tf

    b = _basis(4)
    model = FockModel(b, harmonic_preset(1), N_max=1)
    real = tf._transport_kernel
    monkeypatch.setattr(tf, "_transport_kernel", lambda *a: np.abs(real(*a)) + 1.0)
    with pytest.raises(NonHermitianKernel):
        build_kinetic_generator(model)


def test_epsilon_extrapolation_is_exact_for_quadratics():
    eps = [0.1, 0.05, 0.025]
    vals = [2.0 + 3 * e - 4 * e**2 for e in eps]
    assert float(extrapolate_epsilon(eps, vals)) == pytest.approx(2.0, abs=1e-12)
