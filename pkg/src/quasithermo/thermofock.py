"""Truncated bosonic Fock space over phase-space cells and its kinetic generator.

Phase space is cut into ``C`` equal cells of volume ``Delta``.  Mode
operators obey ``[a_k, a_l^+] = delta_kl / Delta`` so sums ``sum_k Delta (...)``
approximate phase-space integrals.  States are real coefficient vectors over
occupation tuples with at most ``N_max`` quanta.

The generator is a sum of number-conserving terms

    K = sum_m kappa^m / m! Delta^(m+1) sum_{k,l,q} K_kl(q) a_k^+ a_q1^+ .. a_qm^+ a_qm .. a_q1 a_l

where ``K(q)`` is the transport kernel of the velocity field obtained from
the Moyal bracket of ``H^(m)(x, y_1..y_m)`` with the coordinates of ``x``,
the spectators sitting at the cells ``q``.  Transport kernels are written in
the skew form ``(W D + D W)/2`` with ``D`` the periodic spectral derivative,
so ``K`` is real antisymmetric and ``iK`` is Hermitian.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sps
import sympy as sp

from .errors import DimensionExplosion, NonHermitianKernel, StepTooLarge, WeightOverflow
from .evolution import spectral_derivative_matrix
from .fields import Grid, StateField
from .wigner import moyal_bracket

__all__ = [
    "MAX_FOCK_DIM",
    "PhaseCellBasis",
    "FockSpace",
    "FockVector",
    "CCRSet",
    "build_ccr",
    "phase_symbols",
    "HBAR",
    "FockModel",
    "free_transport_preset",
    "harmonic_preset",
    "quartic_coupling_preset",
    "build_kinetic_generator",
    "one_particle_state",
    "FockTrajectory",
    "generator_norm_bound",
    "evolve_R",
    "density_F",
    "particle_number",
    "generating_Z",
    "hierarchy_residual",
    "extrapolate_epsilon",
]

MAX_FOCK_DIM = 20_000
HBAR = sp.Symbol("hbar", positive=True)


@dataclass(frozen=True)
class PhaseCellBasis:
    """Cells of a uniform phase-space grid; the grid has ``2d`` axes ``(X.., J..)``."""

    grid: Grid

    def __post_init__(self):
        if self.grid.ndim % 2:
            raise ValueError("phase-space grid needs an even number of axes")

    @property
    def d(self) -> int:
        return self.grid.ndim // 2

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def delta(self) -> float:
        return self.grid.cell_volume

    @cached_property
    def centers(self) -> np.ndarray:
        return self.grid.points()

    @cached_property
    def derivatives(self) -> list[np.ndarray]:
        """Dense spectral derivative along each axis, acting on flattened cell vectors."""
        mats = []
        for ax in range(self.grid.ndim):
            Dm = spectral_derivative_matrix(self.grid.shape[ax], self.grid.spacing[ax])
            full = np.ones((1, 1))
            for other in range(self.grid.ndim):
                full = np.kron(full, Dm if other == ax else np.eye(self.grid.shape[other]))
            mats.append(full)
        return mats


def _fock_dim(C: int, N: int) -> int:
    return math.comb(C + N, N)


@dataclass
class FockSpace:
    """Occupation-number basis with ``sum n_k <= N_max``, ordered by total number."""

    C: int
    N_max: int

    def __post_init__(self):
        dim = _fock_dim(self.C, self.N_max)
        if dim > MAX_FOCK_DIM:
            raise DimensionExplosion(f"Fock dimension {dim} exceeds {MAX_FOCK_DIM}")
        states: list[tuple[int, ...]] = []
        for total in range(self.N_max + 1):
            for combo in itertools.combinations_with_replacement(range(self.C), total):
                occ = [0] * self.C
                for k in combo:
                    occ[k] += 1
                states.append(tuple(occ))
        self.states = states
        self.index = {s: i for i, s in enumerate(states)}
        rows, cols, vals = [], [], []
        for i, s in enumerate(states):
            for k, nk in enumerate(s):
                if nk:
                    rows.append(i)
                    cols.append(k)
                    vals.append(nk)
        self.occupations = sps.csr_matrix((vals, (rows, cols)), shape=(len(states), self.C), dtype=float)

    @property
    def dim(self) -> int:
        return len(self.states)

    def vacuum(self) -> "FockVector":
        c = np.zeros(self.dim)
        c[0] = 1.0
        return FockVector(self, c)

    def basis_vector(self, occupation: Sequence[int]) -> "FockVector":
        c = np.zeros(self.dim)
        c[self.index[tuple(occupation)]] = 1.0
        return FockVector(self, c)


@dataclass
class FockVector:
    space: FockSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs)
        if self.coeffs.shape != (self.space.dim,):
            raise ValueError("coefficient vector does not match the Fock dimension")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("Fock vector has non-finite entries")

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.coeffs) or bool(np.all(self.coeffs.imag == 0))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


@dataclass
class CCRSet:
    """Annihilators ``a_k`` as sparse matrices; creators are their transposes."""

    space: FockSpace
    delta: float
    annihilators: list[sps.csr_matrix]

    def a(self, k: int) -> sps.csr_matrix:
        return self.annihilators[k]

    def adag(self, k: int) -> sps.csr_matrix:
        return self.annihilators[k].T.tocsr()

    def number_operator(self) -> sps.csr_matrix:
        """``sum_k Delta a_k^+ a_k``, diagonal with the total occupation."""
        return sps.diags(np.asarray(self.space.occupations.sum(axis=1)).ravel()).tocsr()


def build_ccr(basis: PhaseCellBasis | int, N_max: int, delta: float | None = None) -> CCRSet:
    """Mode operators on the truncated space; the top shell leaks under ``a^+``."""
    if isinstance(basis, PhaseCellBasis):
        C, delta = basis.size, basis.delta
    else:
        C, delta = int(basis), 1.0 if delta is None else float(delta)
    space = FockSpace(C, N_max)
    ann = []
    for k in range(C):
        rows, cols, vals = [], [], []
        for i, s in enumerate(space.states):
            nk = s[k]
            if nk:
                t = list(s)
                t[k] -= 1
                rows.append(space.index[tuple(t)])
                cols.append(i)
                vals.append(math.sqrt(nk / delta))
        ann.append(sps.csr_matrix((vals, (rows, cols)), shape=(space.dim, space.dim)))
    return CCRSet(space, delta, ann)


def phase_symbols(d: int, particle: int = 0) -> tuple[tuple[sp.Symbol, ...], tuple[sp.Symbol, ...]]:
    """Coordinate symbols ``X1.., J1..`` of a particle; spectators carry a ``_p`` suffix."""
    suffix = "" if particle == 0 else f"_{particle}"
    X = tuple(sp.Symbol(f"X{s + 1}{suffix}", real=True) for s in range(d))
    J = tuple(sp.Symbol(f"J{s + 1}{suffix}", real=True) for s in range(d))
    return X, J


@dataclass
class FockModel:
    """Kinetic model on a cell basis.

    ``hamiltonians[m]`` is a sympy polynomial in the coordinates of the
    transported particle (``phase_symbols(d, 0)``), of ``m`` spectators
    (``phase_symbols(d, p)``, ``p = 1..m``) and optionally of ``HBAR``.
    """

    basis: PhaseCellBasis
    hamiltonians: list
    N_max: int = 1
    kappa: float = 0.0
    epsilon: float = 0.0
    hbar: float = 1.0
    R_eq: FockVector | None = None
    star_order: int = 2

    def __post_init__(self):
        self.hamiltonians = [sp.sympify(h) for h in self.hamiltonians]
        if not self.hamiltonians:
            raise ValueError("at least the one-body Hamiltonian is required")
        d = self.basis.d
        for m, H in enumerate(self.hamiltonians):
            allowed = set(HBAR for _ in [0])
            for p in range(m + 1):
                X, J = phase_symbols(d, p)
                allowed |= set(X) | set(J)
            extra = H.free_symbols - allowed
            if extra:
                raise ValueError(f"H^({m}) uses unknown symbols {sorted(map(str, extra))}")
            for sym in H.free_symbols - {HBAR}:
                if sp.degree(H, sym) > 4:
                    raise ValueError(f"H^({m}) exceeds degree 4 in {sym}")

    @property
    def M(self) -> int:
        return len(self.hamiltonians) - 1

    @cached_property
    def space(self) -> FockSpace:
        return FockSpace(self.basis.size, self.N_max)

    @cached_property
    def velocity_functions(self) -> list:
        """Per order ``m``: callable ``(x_cols, spectator coords) -> velocity (2d, n)``."""
        d = self.basis.d
        X, J = phase_symbols(d, 0)
        coords = X + J
        out = []
        for m, H in enumerate(self.hamiltonians):
            Hn = H.subs(HBAR, self.hbar)
            spect = []
            for p in range(1, m + 1):
                Xp, Jp = phase_symbols(d, p)
                spect.extend(Xp + Jp)
            w = [moyal_bracket(Hn, c, self.star_order, self.hbar, X, J) for c in coords]
            fn = sp.lambdify(list(coords) + spect, w, "numpy")
            out.append(fn)
        return out


def free_transport_preset(d: int = 1) -> list:
    X, J = phase_symbols(d)
    return [sum(j**2 for j in J) / 2]


def harmonic_preset(d: int = 1, omega: float = 1.0) -> list:
    X, J = phase_symbols(d)
    return [sum(j**2 for j in J) / 2 + sp.nsimplify(omega) ** 2 * sum(x**2 for x in X) / 2]


def quartic_coupling_preset(d: int = 1, omega: float = 1.0, g: float = 1.0) -> list:
    """Harmonic one-body part plus ``g/4 |X - X'|^4`` between a particle and a spectator."""
    X, _ = phase_symbols(d)
    Xp, _ = phase_symbols(d, 1)
    return harmonic_preset(d, omega) + [sp.nsimplify(g) / 4 * sum((a - b) ** 2 for a, b in zip(X, Xp)) ** 2]


def _velocity(model: FockModel, m: int, spect_cells: tuple[int, ...]) -> np.ndarray:
    cen = model.basis.centers
    n = cen.shape[0]
    args = [cen[:, i] for i in range(cen.shape[1])]
    for q in spect_cells:
        args.extend(np.full(n, v) for v in cen[q])
    w = model.velocity_functions[m](*args)
    return np.array([np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in w])


def _transport_kernel(model: FockModel, m: int, spect_cells: tuple[int, ...]) -> np.ndarray:
    w = _velocity(model, m, spect_cells)
    K = np.zeros((model.basis.size, model.basis.size))
    for i, D in enumerate(model.basis.derivatives):
        if np.any(w[i]):
            K += 0.5 * (w[i][:, None] + w[i][None, :]) * D
    return K


def _falling(n: int, c: int) -> int:
    out = 1
    for t in range(c):
        out *= n - t
    return out


def build_kinetic_generator(model: FockModel) -> sps.csr_matrix:
    """Assemble the generator on the truncated space and check ``K + K^T = 0``."""
    space = model.space
    delta = model.basis.delta
    C = model.basis.size
    rows, cols, vals = [], [], []
    kernels: dict = {}

    def kernel(m, q):
        key = (m, q)
        if key not in kernels:
            kernels[key] = _transport_kernel(model, m, q)
        return kernels[key]

    K0 = kernel(0, ())
    for i, s in enumerate(space.states):
        occ = np.array(s)
        for l in np.nonzero(occ)[0]:
            rest = occ.copy()
            rest[l] -= 1
            # effective one-body kernel for the particle leaving cell l
            col = K0[:, l] * delta
            for m in range(1, model.M + 1):
                if model.kappa == 0.0:
                    continue
                cm = model.kappa**m / math.factorial(m) * delta ** (m + 1)
                occupied = tuple(int(q) for q in np.nonzero(rest)[0])
                for q in itertools.product(occupied, repeat=m):
                    counts: dict = {}
                    for c in q:
                        counts[c] = counts.get(c, 0) + 1
                    weight = 1.0
                    for c, cnt in counts.items():
                        weight *= _falling(int(rest[c]), cnt)
                    weight /= delta**m
                    if weight:
                        col = col + cm * weight * kernel(m, tuple(sorted(q)))[:, l]
            amp_l = math.sqrt(occ[l] / delta)
            for k in np.nonzero(col)[0]:
                target = rest.copy()
                target[k] += 1
                j = space.index[tuple(int(v) for v in target)]
                rows.append(j)
                cols.append(i)
                vals.append(col[k] * amp_l * math.sqrt(target[k] / delta))
    K = sps.csr_matrix((vals, (rows, cols)), shape=(space.dim, space.dim))
    K.sum_duplicates()
    asym = abs(K + K.T).max() if K.nnz else 0.0
    scale = max(1.0, abs(K).max() if K.nnz else 0.0)
    if asym > 1e-10 * scale:
        raise NonHermitianKernel(f"generator fails antisymmetry by {asym:.3g}")
    return K


def one_particle_state(space: FockSpace, amplitude: np.ndarray, delta: float) -> FockVector:
    """Real one-quantum state whose cell density is ``amplitude**2``."""
    amplitude = np.asarray(amplitude, dtype=float).ravel()
    if amplitude.size != space.C:
        raise ValueError("amplitude must have one entry per cell")
    c = np.zeros(space.dim)
    for k in range(space.C):
        occ = [0] * space.C
        occ[k] = 1
        c[space.index[tuple(occ)]] = math.sqrt(delta) * amplitude[k]
    return FockVector(space, c)


@dataclass
class FockTrajectory:
    times: np.ndarray
    vectors: list[FockVector]
    norms: np.ndarray
    numbers: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> FockVector:
        return self.vectors[-1]


def generator_norm_bound(K: sps.spmatrix) -> float:
    """``sqrt(|K|_1 |K|_inf)``, an upper bound on the spectral norm."""
    if K.nnz == 0:
        return 0.0
    absK = abs(K)
    one = float(absK.sum(axis=0).max())
    inf = float(absK.sum(axis=1).max())
    return math.sqrt(one * inf)


def evolve_R(
    K: sps.spmatrix,
    R0: FockVector,
    t_span: Sequence[float],
    dt: float,
    epsilon: float = 0.0,
    R_eq: FockVector | None = None,
    save_every: int | None = None,
) -> FockTrajectory:
    """RK4 for ``dR/dt = -K R - epsilon (R - R_eq)``; requires ``dt * |K| <= 0.1``."""
    bound = generator_norm_bound(K)
    if dt * bound > 0.1:
        raise StepTooLarge(f"dt*|K| = {dt * bound:.3g} exceeds 0.1; use dt <= {0.1 / bound:.3g}")
    t0, t1 = float(t_span[0]), float(t_span[1])
    n = max(int(math.ceil((t1 - t0) / dt - 1e-9)), 1) if t1 > t0 else 0
    h = (t1 - t0) / n if n else 0.0
    space = R0.space
    eq = np.zeros(space.dim) if R_eq is None else np.asarray(R_eq.coeffs)
    occ_total = np.asarray(space.occupations.sum(axis=1)).ravel()

    def rhs(r):
        return -(K @ r) - epsilon * (r - eq)

    r = np.array(R0.coeffs, dtype=float if R0.is_real else complex)
    norms = np.empty(n + 1)
    numbers = np.empty(n + 1)
    norms[0] = np.linalg.norm(r)
    numbers[0] = float(np.sum(np.abs(r) ** 2 * occ_total))
    vecs = [FockVector(space, r.copy())]
    times = [t0]
    for k in range(n):
        k1 = rhs(r)
        k2 = rhs(r + 0.5 * h * k1)
        k3 = rhs(r + 0.5 * h * k2)
        k4 = rhs(r + h * k3)
        r = r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        norms[k + 1] = np.linalg.norm(r)
        numbers[k + 1] = float(np.sum(np.abs(r) ** 2 * occ_total))
        if save_every and (k + 1) % save_every == 0 and k + 1 < n:
            vecs.append(FockVector(space, r.copy()))
            times.append(t0 + (k + 1) * h)
    if n:
        vecs.append(FockVector(space, r.copy()))
        times.append(t0 + n * h)
    return FockTrajectory(np.array(times), vecs, norms, numbers, {"steps": n, "dt": h, "norm_bound": bound})


def density_F(R: FockVector, basis: PhaseCellBasis) -> StateField:
    """Cell density ``<R, a_k^+ a_k R>``; ``sum_k Delta F_k`` is the particle number."""
    weights = np.abs(R.coeffs) ** 2
    F = (R.space.occupations.T @ weights) / basis.delta
    labels = tuple(f"X{s + 1}" for s in range(basis.d)) + tuple(f"J{s + 1}" for s in range(basis.d))
    number = float(np.sum(F) * basis.delta)
    return StateField(basis.grid, F.reshape(basis.grid.shape), "F", 1.0, labels=labels, meta={"particle_number": number})


def particle_number(R: FockVector) -> float:
    occ_total = np.asarray(R.space.occupations.sum(axis=1)).ravel()
    return float(np.sum(np.abs(R.coeffs) ** 2 * occ_total))


def generating_Z(F: StateField, u: Sequence[float], k_B: float = 1.0, variant: str = "fourier") -> complex | float:
    """Generating function of a phase-space density.

    ``fourier``: ``sum F exp(i u.x / k_B) dV`` with ``u`` over all ``2d`` axes.
    ``laplace``: ``sum F exp(-u.X / k_B) dV`` with ``u`` over the position
    axes only (momentum components of ``u`` fixed at zero).
    """
    u = np.asarray(u, dtype=float)
    mesh = F.grid.mesh()
    dv = F.grid.cell_volume
    vals = np.asarray(F.values, dtype=float)
    if variant == "fourier":
        if u.size != len(mesh):
            raise ValueError(f"u needs {len(mesh)} components")
        arg = sum(ui * m for ui, m in zip(u, mesh)) / k_B
        return complex(np.sum(vals * np.exp(1j * arg)) * dv)
    if variant == "laplace":
        d = len(mesh) // 2
        if u.size == 2 * d:
            if np.any(u[d:] != 0):
                raise ValueError("the real-exponent variant fixes the momentum components of u at zero")
            u = u[:d]
        if u.size != d:
            raise ValueError(f"u needs {d} components")
        arg = -sum(ui * m for ui, m in zip(u, mesh[:d])) / k_B
        peak = float(np.max(arg))
        if peak > 700.0:
            raise WeightOverflow(f"exponent {peak:.4g} exceeds 700")
        return float(np.sum(vals * np.exp(arg)) * dv)
    raise ValueError(f"unknown variant {variant!r}")


def hierarchy_residual(model: FockModel, K: sps.spmatrix, R: FockVector) -> tuple[float, np.ndarray, np.ndarray]:
    """Compare ``dF/dt`` from the generator with its reduced-density form.

    The reduced form uses the one-body density matrix for the free term and
    the two-body one for the ``m = 1`` coupling.  Returns the max residual
    and both predictions.
    """
    if model.M > 1:
        raise ValueError("the reduced form is implemented for M <= 1")
    ccr = build_ccr(model.basis, model.N_max)
    r = np.asarray(R.coeffs, dtype=float)
    delta = model.basis.delta
    C = model.basis.size
    eq = np.zeros_like(r) if model.R_eq is None else np.asarray(model.R_eq.coeffs, dtype=float)
    rdot = -(K @ r) - model.epsilon * (r - eq)
    occ = R.space.occupations
    lhs = 2.0 * (occ.T @ (r * rdot)) / delta

    ann = np.array([ccr.a(l) @ r for l in range(C)])
    rho1 = ann @ ann.T
    K0 = _transport_kernel(model, 0, ())
    # commuting with a_j^+ a_j costs one 1/Delta, so order m carries Delta^m
    flow = np.einsum("kj,kj->j", K0, rho1) - np.einsum("jl,jl->j", K0, rho1)
    if model.M >= 1 and model.kappa != 0.0:
        pair = np.array([[ccr.a(q) @ ann[l] for l in range(C)] for q in range(C)])
        coupling = np.zeros(C)
        for q in range(C):
            Kq = _transport_kernel(model, 1, (q,))
            rho2 = pair[q] @ pair[q].T
            coupling += np.einsum("kj,kj->j", Kq, rho2) - np.einsum("jl,jl->j", Kq, rho2)
        flow = flow + model.kappa * delta * coupling
    relax = -2.0 * model.epsilon * (occ.T @ ((r - eq) * r)) / delta
    rhs = flow + relax
    return float(np.max(np.abs(lhs - rhs))), lhs, rhs


def extrapolate_epsilon(eps: Sequence[float], values: Sequence) -> np.ndarray:
    """Polynomial extrapolation of results at several relaxation rates to zero rate."""
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(values, dtype=float)
    V = np.vander(eps, len(eps), increasing=True)
    coef = np.linalg.solve(V, vals.reshape(len(eps), -1))
    return coef[0].reshape(vals.shape[1:])
