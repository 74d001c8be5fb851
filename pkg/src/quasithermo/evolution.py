"""Relaxation dynamics: Onsager ODEs, drift-diffusion transport and phase-space kinetics.

Three solvers live here.

* :func:`integrate_onsager` integrates linear-response relaxation of the
  extensive coordinates with classical RK4.
* :func:`fp_evolve` transports a fluctuation density with a conservative
  finite-volume scheme.  Face fluxes use the exponentially fitted
  (Scharfetter-Gummel) weighting, which is upwind when diffusion vanishes and
  centred when advection vanishes; time stepping is Heun.
* :func:`fp_phase_space_evolve` transports a phase-space density by the
  Hamiltonian vector field plus a collision diffusion term, using periodic
  Fourier differentiation and RK4.

All solvers keep the zero-mode of the update exactly zero, so total mass is
conserved to round-off.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import logsumexp

from .errors import (
    CFLViolation,
    DivergentNormalization,
    DomainError,
    DomainExit,
    NegativeDensityWarning,
    NonZeroDivergence,
    PathDependence,
)
from .fields import Grid, StateField, format_float
from .manifold import Box, ideal_gas_manifold

__all__ = [
    "OnsagerModel",
    "OnsagerTrajectory",
    "integrate_onsager",
    "heat_exchange_model",
    "WeightModel",
    "build_lambda_tilde",
    "DriftDiffusionSpec",
    "FPTrajectory",
    "cfl_limit",
    "fp_evolve",
    "symplectic_matrix",
    "PotentialResult",
    "reconstruct_potential",
    "PhaseSpaceModel",
    "spectral_derivative_matrix",
    "phase_space_rhs",
    "phase_space_cfl_limit",
    "fp_phase_space_evolve",
]

CFL_SAFETY = 0.9
NEGATIVE_TOL = 1e-8


# ---------------------------------------------------------------------------
# Onsager relaxation


@dataclass
class OnsagerModel:
    """Linear-response relaxation ``dx/dt = J(x) + L(x) y(x)``.

    ``intensive`` maps the extensive state to its conjugate forces,
    ``onsager`` is a constant matrix or a callable returning one.
    ``constrained`` lists state components whose rate is projected to zero
    every stage (the flows-of-flows components of a doubled model).
    """

    intensive: Callable[[np.ndarray], np.ndarray]
    onsager: np.ndarray | Callable[[np.ndarray], np.ndarray]
    flows: Callable[[np.ndarray], np.ndarray] | None = None
    box: Box | None = None
    entropy: Callable[[np.ndarray], float] | None = None
    constrained: tuple[int, ...] = ()
    labels: tuple[str, ...] = ()

    def onsager_at(self, x: np.ndarray) -> np.ndarray:
        L = self.onsager(x) if callable(self.onsager) else self.onsager
        return np.asarray(L, dtype=float)

    def rate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.box is not None and not self.box.contains(x):
            raise DomainExit(f"state {x} left the chart box")
        try:
            y = np.asarray(self.intensive(x), dtype=float)
        except DomainError as exc:
            raise DomainExit(str(exc)) from exc
        r = self.onsager_at(x) @ y
        if self.flows is not None:
            r = r + np.asarray(self.flows(x), dtype=float)
        if self.constrained:
            r = r.copy()
            r[list(self.constrained)] = 0.0
        return r

    @classmethod
    def doubled(
        cls,
        intensive: Callable[[np.ndarray], np.ndarray],
        onsager: np.ndarray | Callable[[np.ndarray], np.ndarray],
        d: int,
        flows: Callable[[np.ndarray], np.ndarray] | None = None,
        box: Box | None = None,
        entropy: Callable[[np.ndarray], float] | None = None,
    ) -> "OnsagerModel":
        """Model on ``2d`` coordinates whose last ``d`` components are flows held fixed."""
        return cls(intensive, onsager, flows, box, entropy, tuple(range(d, 2 * d)))


@dataclass
class OnsagerTrajectory:
    times: np.ndarray
    states: np.ndarray
    intensive: np.ndarray
    entropy: np.ndarray | None
    diagnostics: dict = field(default_factory=dict)
    labels: tuple[str, ...] = ()

    def to_csv(self) -> str:
        d = self.states.shape[1]
        labels = self.labels or tuple(f"x{i + 1}" for i in range(d))
        head = ["t"] + list(labels) + [f"y_{lab}" for lab in labels]
        if self.entropy is not None:
            head.append("S")
        rows = [",".join(head)]
        for k, t in enumerate(self.times):
            row = [t, *self.states[k], *self.intensive[k]]
            if self.entropy is not None:
                row.append(self.entropy[k])
            rows.append(",".join(format_float(v) for v in row))
        return "\n".join(rows) + "\n"


def _n_steps(t_span: Sequence[float], dt: float) -> tuple[int, float, float]:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 >= t0:
        raise ValueError("t_span must be increasing")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = max(int(math.ceil((t1 - t0) / dt - 1e-9)), 1) if t1 > t0 else 0
    return n, (t1 - t0) / n if n else 0.0, t0


def integrate_onsager(model: OnsagerModel, x0: Sequence[float], t_span: Sequence[float], dt: float) -> OnsagerTrajectory:
    """Classical RK4 integration; raises :class:`DomainExit` on leaving the box."""
    n, h, t0 = _n_steps(t_span, dt)
    x = np.asarray(x0, dtype=float).copy()
    if model.box is not None and not model.box.contains(x):
        raise DomainExit(f"initial state {x} outside the chart box")
    states = np.empty((n + 1, x.size))
    states[0] = x
    for k in range(n):
        k1 = model.rate(x)
        k2 = model.rate(x + 0.5 * h * k1)
        k3 = model.rate(x + 0.5 * h * k2)
        k4 = model.rate(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if model.box is not None and not model.box.contains(x):
            raise DomainExit(f"trajectory left the chart box at t={t0 + (k + 1) * h:.6g}")
        states[k + 1] = x
    times = t0 + h * np.arange(n + 1)
    ys = np.array([model.intensive(s) for s in states])
    ent = np.array([model.entropy(s) for s in states]) if model.entropy is not None else None
    diag: dict = {"steps": n, "dt": h}
    if model.constrained:
        idx = list(model.constrained)
        diag["constraint_residual"] = float(np.max(np.abs(states[:, idx] - states[0, idx])))
    if ent is not None and n:
        diag["min_entropy_increment"] = float(np.min(np.diff(ent)))
    return OnsagerTrajectory(times, states, ys, ent, diag, model.labels)


def heat_exchange_model(
    c_v: float,
    conductance: float,
    nu: Sequence[float] = (1.0, 1.0),
    R: float = 1.0,
    box: Box | None = None,
) -> OnsagerModel:
    """Two ideal-gas subsystems exchanging energy through a thermal contact.

    Forces are ``beta_i = c_v nu_i / E_i``; ``L = conductance * [[1, -1], [-1, 1]]``
    drives the energies toward equal temperature while conserving their sum.
    """
    if not conductance >= 0:
        raise ValueError("conductance must be non-negative")
    chart = ideal_gas_manifold(c_v, d=1, R=R)
    nu = np.asarray(nu, dtype=float)
    L = conductance * np.array([[1.0, -1.0], [-1.0, 1.0]])

    def intensive(E):
        return np.array([chart.gradient(np.array([E[i], nu[i]]))[0] for i in range(2)])

    def entropy(E):
        return float(sum(chart(np.array([E[i], nu[i]])) for i in range(2)))

    box = box or Box([1e-9, 1e-9], [1e12, 1e12])
    return OnsagerModel(intensive, L, None, box, entropy, (), ("E1", "E2"))


# ---------------------------------------------------------------------------
# Statistical weight and the normalized fluctuation density


@dataclass
class WeightModel:
    """Statistical weight ``Gamma`` on a box, given through ``ln Gamma``.

    ``log_gamma`` takes the coordinate arrays (one per axis) and returns
    ``ln Gamma`` broadcast over them.  ``size`` is the system size ``L`` and
    ``exponent`` the power ``n`` in the extensive scaling ``L**n``.
    """

    log_gamma: Callable[..., np.ndarray]
    size: float = 1.0
    exponent: float = 1.0
    c: float = 1.0
    k_B: float = 1.0
    grad_log_gamma: Callable[..., Sequence[np.ndarray]] | None = None

    def __post_init__(self):
        if not (self.size > 0 and self.c > 0 and self.k_B > 0):
            raise ValueError("size, c and k_B must be positive")

    @property
    def size_factor(self) -> float:
        return float(self.size**self.exponent)

    def beta(self, *coords: np.ndarray) -> np.ndarray:
        """Forces ``k_B d ln Gamma / d a_j``, shape ``(d, *shape)``."""
        if self.grad_log_gamma is not None:
            g = self.grad_log_gamma(*coords)
        else:
            g = []
            for j, a in enumerate(coords):
                h = 1e-6 * np.maximum(1.0, np.abs(a))
                up = list(coords)
                dn = list(coords)
                up[j] = a + h
                dn[j] = a - h
                g.append((self.log_gamma(*up) - self.log_gamma(*dn)) / (2.0 * h))
        shape = np.broadcast(*coords).shape
        return self.k_B * np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in g])

    def entropy(self, *coords: np.ndarray) -> np.ndarray:
        """Boltzmann entropy ``k_B ln(c Gamma)``."""
        return self.k_B * (math.log(self.c) + self.log_gamma(*coords))

    def boltzmann_residual(self, entropy: Callable[..., np.ndarray], *coords: np.ndarray) -> float:
        return float(np.max(np.abs(self.entropy(*coords) - entropy(*coords))))


def build_lambda_tilde(
    weight: WeightModel,
    sigma: Callable[..., np.ndarray],
    grid: Grid,
    tail_tol: float | None = None,
) -> tuple[StateField, Callable[..., np.ndarray], float]:
    """Normalize ``sigma`` so that ``sum Gamma exp(-L^n sigma / k_B) dV = 1``.

    Returns the size-scaled density ``F = L^n Gamma exp(-L^n sigma/k_B)``, the
    shifted ``sigma`` and the additive shift.  With ``tail_tol`` set, a
    boundary layer carrying more than that fraction of the mass is reported
    as a truncated divergent integral.
    """
    mesh = grid.mesh()
    Ln = weight.size_factor
    with np.errstate(over="ignore", invalid="ignore"):
        expo = np.broadcast_to(weight.log_gamma(*mesh) - Ln * np.asarray(sigma(*mesh)) / weight.k_B, grid.shape)
    if not np.all(np.isfinite(expo)):
        raise DivergentNormalization("weight or sigma not finite on the grid")
    log_int = float(logsumexp(expo) + math.log(grid.cell_volume))
    if not math.isfinite(log_int):
        raise DivergentNormalization("normalization integral is not finite")
    shift = weight.k_B * log_int / Ln
    f = np.exp(expo - log_int)
    if tail_tol is not None:
        edge = np.zeros(grid.shape, dtype=bool)
        for ax in range(grid.ndim):
            idx = [slice(None)] * grid.ndim
            idx[ax] = 0
            edge[tuple(idx)] = True
            idx[ax] = -1
            edge[tuple(idx)] = True
        tail = float(np.sum(f[edge]) * grid.cell_volume)
        if tail > tail_tol:
            raise DivergentNormalization(f"boundary cells carry mass {tail:.3g} > {tail_tol:.3g}")

    def sigma_normalized(*coords):
        return np.asarray(sigma(*coords)) + shift

    state = StateField(grid, Ln * f, "F", Ln, meta={"sigma_shift": shift})
    return state, sigma_normalized, shift


# ---------------------------------------------------------------------------
# Drift-diffusion transport


@dataclass
class DriftDiffusionSpec:
    """Coefficients of ``dF/dt = -div(v F) + div(D grad F)``.

    ``bare_drift`` and ``beta`` take coordinate arrays and return ``d``
    arrays; ``diffusion`` is a constant ``(d, d)`` matrix or a callable
    returning shape ``(d, d, *shape)``.  The transport velocity is
    ``v = u + D beta / k_B``.
    """

    bare_drift: Callable[..., Sequence[np.ndarray]] | None = None
    diffusion: np.ndarray | Callable[..., np.ndarray] | None = None
    beta: Callable[..., Sequence[np.ndarray]] | None = None
    k_B: float = 1.0
    dim: int | None = None

    def _dim(self, coords) -> int:
        return self.dim or len(coords)

    def diffusion_at(self, *coords: np.ndarray) -> np.ndarray:
        d = self._dim(coords)
        shape = np.broadcast(*coords).shape
        if self.diffusion is None:
            return np.zeros((d, d) + shape)
        if callable(self.diffusion):
            D = np.asarray(self.diffusion(*coords), dtype=float)
            return np.broadcast_to(D, (d, d) + shape)
        D = np.asarray(self.diffusion, dtype=float).reshape(d, d)
        return np.broadcast_to(D.reshape((d, d) + (1,) * len(shape)), (d, d) + shape)

    def _field(self, fn, coords) -> np.ndarray:
        d = self._dim(coords)
        shape = np.broadcast(*coords).shape
        if fn is None:
            return np.zeros((d,) + shape)
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in fn(*coords)])

    def bare_drift_at(self, *coords) -> np.ndarray:
        return self._field(self.bare_drift, coords)

    def beta_at(self, *coords) -> np.ndarray:
        return self._field(self.beta, coords)

    def drift_at(self, *coords) -> np.ndarray:
        D = self.diffusion_at(*coords)
        return self.bare_drift_at(*coords) + np.einsum("ij...,j...->i...", D, self.beta_at(*coords)) / self.k_B

    def decomposition_residual(self, *coords) -> float:
        """Max deviation of ``v - u`` from ``D beta / k_B``."""
        D = self.diffusion_at(*coords)
        lhs = self.drift_at(*coords) - self.bare_drift_at(*coords)
        rhs = np.einsum("ij...,j...->i...", D, self.beta_at(*coords)) / self.k_B
        return float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0

    def check_psd(self, *coords, tol: float = 1e-12) -> float:
        """Smallest eigenvalue of the symmetric part of ``D``; raises if below ``-tol``."""
        D = self.diffusion_at(*coords)
        d = D.shape[0]
        mats = np.moveaxis(D.reshape(d, d, -1), -1, 0)
        if np.max(np.abs(mats - np.swapaxes(mats, 1, 2)), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(mats), initial=0.0)):
            raise ValueError("diffusion matrix is not symmetric")
        lo = float(np.min(np.linalg.eigvalsh(mats))) if mats.size else 0.0
        if lo < -tol:
            raise ValueError(f"diffusion matrix not positive semidefinite (min eigenvalue {lo:.3g})")
        return lo

    @classmethod
    def from_weight(
        cls,
        weight: WeightModel,
        diffusion,
        bare_drift: Callable[..., Sequence[np.ndarray]] | None = None,
    ) -> "DriftDiffusionSpec":
        return cls(bare_drift, diffusion, lambda *c: list(weight.beta(*c)), weight.k_B)


@dataclass
class FPTrajectory:
    """Snapshots plus per-step diagnostics of a transport run."""

    times: np.ndarray
    states: list[StateField]
    step_times: np.ndarray
    mass: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> StateField:
        return self.states[-1]

    @property
    def max_step_mass_change(self) -> float:
        return float(np.max(np.abs(np.diff(self.mass)), initial=0.0))


def _bernoulli(x: np.ndarray) -> np.ndarray:
    """``x / (exp(x) - 1)`` evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    out = 1.0 - 0.5 * x
    pos = x >= 1e-8
    neg = x <= -1e-8
    xp = x[pos]
    out[pos] = xp * np.exp(-xp) / -np.expm1(-xp)
    out[neg] = x[neg] / np.expm1(x[neg])
    return out


class _FaceFluxes:
    """Precomputed exponentially fitted face coefficients for a static spec."""

    def __init__(self, grid: Grid, spec: DriftDiffusionSpec):
        self.grid = grid
        self.h = grid.spacing
        d = grid.ndim
        self.left: list[np.ndarray] = []
        self.right: list[np.ndarray] = []
        self.cross: list[list[tuple[int, np.ndarray]]] = []
        self.vmax = np.zeros(d)
        self.trace_max = 0.0
        for i in range(d):
            faces = grid.face_mesh(i)
            v = spec.drift_at(*faces)[i]
            D = spec.diffusion_at(*faces)
            Dii = D[i, i]
            h = self.h[i]
            with np.errstate(divide="ignore", invalid="ignore"):
                pe = np.where(Dii > 0, v * h / np.where(Dii > 0, Dii, 1.0), 0.0)
            diffusive = Dii > 0
            aL = np.where(diffusive, Dii / h * _bernoulli(-pe), np.maximum(v, 0.0))
            aR = np.where(diffusive, Dii / h * _bernoulli(pe), np.maximum(-v, 0.0))
            self.left.append(aL)
            self.right.append(aR)
            self.cross.append([(j, np.array(D[i, j])) for j in range(d) if j != i and np.any(D[i, j] != 0)])
            self.vmax[i] = float(np.max(np.abs(v), initial=0.0))
            self.trace_max = max(self.trace_max, float(np.max(np.trace(D), initial=0.0)) if D.size else 0.0)

    def dt_limit(self) -> float:
        lim = math.inf
        for i, h in enumerate(self.h):
            if self.vmax[i] > 0:
                lim = min(lim, h / self.vmax[i])
        if self.trace_max > 0:
            lim = min(lim, float(np.min(self.h)) ** 2 / (2.0 * self.trace_max))
        return CFL_SAFETY * lim

    def rhs(self, F: np.ndarray) -> np.ndarray:
        out = np.zeros_like(F)
        d = F.ndim
        for i in range(d):
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[i] = slice(None, -1)
            hi[i] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            flux = self.left[i] * F[lo] - self.right[i] * F[hi]
            for j, Dij in self.cross[i]:
                if F.shape[j] < 2:
                    continue
                g = np.gradient(F, self.h[j], axis=j)
                flux = flux - Dij * 0.5 * (g[lo] + g[hi])
            div = np.zeros_like(F)
            div[lo] += flux
            div[hi] -= flux
            out -= div / self.h[i]
        return out


def cfl_limit(grid: Grid, spec: DriftDiffusionSpec) -> float:
    """Largest admissible explicit step ``0.9 min(h/|v|, h^2/(2 tr D))``."""
    return _FaceFluxes(grid, spec).dt_limit()


def _enforce_nonnegative(F: np.ndarray, cell_volume: float, log: list) -> np.ndarray:
    lo = float(F.min())
    if lo >= 0.0:
        return F
    scale = float(np.max(np.abs(F)))
    if lo < -NEGATIVE_TOL * max(scale, 1.0):
        if not log:
            # once per run; later events are counted in diagnostics["clip_events"]
            warnings.warn(f"density dipped to {lo:.3g}; clipping", NegativeDensityWarning, stacklevel=3)
        mass = F.sum()
        F = np.clip(F, 0.0, None)
        if F.sum() > 0:
            F *= mass / F.sum()
        log.append(lo)
    return F


def fp_evolve(
    state: StateField,
    spec: DriftDiffusionSpec,
    t_span: Sequence[float],
    dt: float,
    save_every: int | None = None,
) -> FPTrajectory:
    """Evolve ``state`` under the drift-diffusion equation with no-flux walls.

    ``save_every`` controls snapshot spacing in steps; by default only the
    initial and final states are kept.  Mass is recorded after every step.
    """
    grid = state.grid
    fluxes = _FaceFluxes(grid, spec)
    limit = fluxes.dt_limit()
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.6g} exceeds the stability limit {limit:.6g}")
    n, h, t0 = _n_steps(t_span, dt)
    F = np.array(state.values, dtype=float)
    dv = grid.cell_volume
    masses = np.empty(n + 1)
    masses[0] = F.sum() * dv
    clipped: list = []
    snaps = [state.with_values(F, t0)]
    for k in range(n):
        r1 = fluxes.rhs(F)
        F1 = F + h * r1
        F = F + 0.5 * h * (r1 + fluxes.rhs(F1))
        F = _enforce_nonnegative(F, dv, clipped)
        masses[k + 1] = F.sum() * dv
        if save_every and (k + 1) % save_every == 0 and k + 1 < n:
            snaps.append(state.with_values(F, t0 + (k + 1) * h))
    if n:
        snaps.append(state.with_values(F, t0 + n * h))
    diag = {"steps": n, "dt": h, "cfl_limit": limit, "clip_events": len(clipped)}
    traj = FPTrajectory(np.array([s.time for s in snaps]), snaps, t0 + h * np.arange(n + 1), masses, diag)
    diag["max_step_mass_change"] = traj.max_step_mass_change
    return traj


# ---------------------------------------------------------------------------
# Phase-space transport


def symplectic_matrix(d: int) -> np.ndarray:
    """``J[i, j] = delta(i, j - d) - delta(i - d, j)`` on ``2d`` coordinates."""
    J = np.zeros((2 * d, 2 * d))
    J[:d, d:] = np.eye(d)
    J[d:, :d] = -np.eye(d)
    return J


@dataclass
class PotentialResult:
    phi: np.ndarray
    V: np.ndarray
    diagnostics: dict


def _cumulative_potential(G: np.ndarray, grid: Grid, anchor: tuple[int, ...]) -> np.ndarray:
    n = grid.ndim
    h = grid.spacing
    V = np.zeros(grid.shape)
    for k in range(n):
        idx = tuple(slice(None) if a <= k else anchor[a] for a in range(n))
        line = G[k][idx]
        acc = cumulative_trapezoid(line, dx=h[k], axis=k, initial=0.0)
        ref = np.take(acc, [anchor[k]], axis=k)
        acc = acc - ref
        shape = [grid.shape[a] if a <= k else 1 for a in range(n)]
        V = V + acc.reshape(shape)
    return V


def _max_loop(G: np.ndarray, grid: Grid) -> float:
    """Largest trapezoid circulation around any elementary grid plaquette."""
    h = grid.spacing
    n = grid.ndim
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if grid.shape[i] < 2 or grid.shape[j] < 2:
                continue

            def sl(a, b):
                idx = [slice(None)] * n
                idx[i] = slice(0, -1) if a == 0 else slice(1, None)
                idx[j] = slice(0, -1) if b == 0 else slice(1, None)
                return tuple(idx)

            Gi, Gj = G[i], G[j]
            circ = (
                0.5 * h[i] * (Gi[sl(0, 0)] + Gi[sl(1, 0)])
                + 0.5 * h[j] * (Gj[sl(1, 0)] + Gj[sl(1, 1)])
                - 0.5 * h[i] * (Gi[sl(0, 1)] + Gi[sl(1, 1)])
                - 0.5 * h[j] * (Gj[sl(0, 0)] + Gj[sl(0, 1)])
            )
            worst = max(worst, float(np.max(np.abs(circ))))
    return worst


def reconstruct_potential(
    Y: np.ndarray,
    grid: Grid,
    anchor: Sequence[int] | None = None,
    tol: float = 1e-6,
) -> PotentialResult:
    """Recover the potential ``V`` whose Hamiltonian field is ``Y``.

    ``Y`` has shape ``(2d, *grid.shape)``.  ``V`` integrates the candidate
    gradient ``J^{-1} Y`` along axis-ordered paths from ``anchor``; ``phi``
    integrates ``Y`` itself the same way.  A divergence-free ``Y`` on a
    simply connected box is Hamiltonian only if ``J^{-1} Y`` is closed,
    which is what the plaquette-loop test checks.  ``phi`` is a genuine
    potential only when ``Y`` is itself closed; its loop defect is reported
    in the diagnostics rather than raised.
    """
    Y = np.asarray(Y, dtype=float)
    n = grid.ndim
    if n % 2 or Y.shape != (n,) + grid.shape:
        raise ValueError("Y must have shape (2d, *grid.shape) on an even-dimensional grid")
    d = n // 2
    h = grid.spacing
    div = np.zeros(grid.shape)
    for i in range(n):
        if grid.shape[i] > 2:
            div += np.gradient(Y[i], h[i], axis=i, edge_order=2)
    div_l2 = float(np.sqrt(np.sum(div**2) * grid.cell_volume))
    if div_l2 > tol:
        raise NonZeroDivergence(f"L2 divergence {div_l2:.3g} exceeds {tol:.3g}")
    Jinv = symplectic_matrix(d).T
    G = np.einsum("ij,j...->i...", Jinv, Y)
    loop = _max_loop(G, grid)
    if loop > tol:
        raise PathDependence(f"loop integral {loop:.3g} of the candidate gradient exceeds {tol:.3g}")
    anchor = tuple(anchor) if anchor is not None else tuple(m // 2 for m in grid.shape)
    V = _cumulative_potential(G, grid, anchor)
    phi = _cumulative_potential(Y, grid, anchor)
    gradV = [np.gradient(V, h[i], axis=i, edge_order=2) if grid.shape[i] > 2 else np.zeros(grid.shape) for i in range(n)]
    recon = np.einsum("ij,j...->i...", symplectic_matrix(d), np.array(gradV))
    diag = {
        "divergence_l2": div_l2,
        "loop_max": loop,
        "phi_loop_max": _max_loop(Y, grid),
        "field_residual": float(np.max(np.abs(recon - Y))),
    }
    return PotentialResult(phi, V, diag)


def spectral_derivative_matrix(n: int, h: float) -> np.ndarray:
    """Fourier differentiation matrix for ``n`` equispaced periodic samples of spacing ``h``."""
    if n < 2:
        return np.zeros((n, n))
    k = np.arange(n)
    diff = k[:, None] - k[None, :]
    D = np.zeros((n, n))
    off = diff != 0
    arg = np.pi * diff[off] / n
    sign = np.where(diff[off] % 2 == 0, 1.0, -1.0)
    if n % 2 == 0:
        D[off] = 0.5 * sign / np.tan(arg)
    else:
        D[off] = 0.5 * sign / np.sin(arg)
    return D * (2.0 * np.pi / (n * h))


@dataclass
class PhaseSpaceModel:
    """Hamiltonian ``H = |J|^2 / 2 + V(X)`` on ``2d`` phase-space coordinates.

    ``diffusion`` is the constant ``(2d, 2d)`` collision matrix; ``friction``
    adds the drift ``-friction * J`` to the momentum rows so that the Gibbs
    state ``exp(-H / theta)`` with ``D_JJ = friction * theta`` is stationary.
    """

    d: int
    potential: Callable[..., np.ndarray]
    diffusion: np.ndarray | None = None
    friction: float = 0.0
    potential_grad: Callable[..., Sequence[np.ndarray]] | None = None

    def __post_init__(self):
        n = 2 * self.d
        D = np.zeros((n, n)) if self.diffusion is None else np.asarray(self.diffusion, dtype=float)
        if D.shape != (n, n):
            raise ValueError(f"diffusion must be {n}x{n}")
        if np.max(np.abs(D - D.T)) > 1e-14 or np.min(np.linalg.eigvalsh(D)) < -1e-12:
            raise ValueError("diffusion must be symmetric positive semidefinite")
        self.diffusion = D

    @property
    def symplectic(self) -> np.ndarray:
        return symplectic_matrix(self.d)

    def hamiltonian(self, *x: np.ndarray) -> np.ndarray:
        X, J = x[: self.d], x[self.d :]
        return 0.5 * sum(j**2 for j in J) + self.potential(*X)

    def grad_potential(self, *X: np.ndarray) -> list[np.ndarray]:
        if self.potential_grad is not None:
            return [np.asarray(g, dtype=float) for g in self.potential_grad(*X)]
        out = []
        for s, a in enumerate(X):
            h = 1e-5 * np.maximum(1.0, np.abs(a))
            up = list(X)
            dn = list(X)
            up[s] = a + h
            dn[s] = a - h
            out.append((self.potential(*up) - self.potential(*dn)) / (2.0 * h))
        return out

    def velocity(self, *x: np.ndarray) -> np.ndarray:
        """Hamiltonian vector field ``J grad H`` plus the friction drift."""
        X, J = x[: self.d], x[self.d :]
        shape = np.broadcast(*x).shape
        gV = self.grad_potential(*X)
        w = [np.broadcast_to(j, shape) for j in J] + [np.broadcast_to(-g, shape) for g in gV]
        if self.friction:
            w = w[: self.d] + [w[self.d + s] - self.friction * np.broadcast_to(J[s], shape) for s in range(self.d)]
        return np.stack(w)


class _SpectralOperator:
    def __init__(self, grid: Grid, model: PhaseSpaceModel):
        if grid.ndim != 2 * model.d:
            raise ValueError(f"phase-space grid must have {2 * model.d} axes")
        self.grid = grid
        self.model = model
        self.mats = [spectral_derivative_matrix(n, h) for n, h in zip(grid.shape, grid.spacing)]
        mesh = grid.mesh()
        self.w = model.velocity(*mesh)
        self.w_hamiltonian = self.w.copy()
        if model.friction:
            for s in range(model.d):
                self.w_hamiltonian[model.d + s] += model.friction * mesh[model.d + s]
        self.friction = model.friction
        self.mesh = mesh
        self.D = model.diffusion

    def diff(self, F: np.ndarray, axis: int) -> np.ndarray:
        moved = np.moveaxis(F, axis, -1)
        return np.moveaxis(moved @ self.mats[axis].T, -1, axis)

    def rhs(self, F: np.ndarray) -> np.ndarray:
        # Skew split of the Hamiltonian transport keeps it norm-preserving on
        # non-periodic velocity fields; each Hamiltonian velocity component is
        # independent of its own coordinate, so the split is also conservative.
        n = F.ndim
        d = self.model.d
        out = np.zeros_like(F)
        for i in range(n):
            w = self.w_hamiltonian[i]
            out -= 0.5 * (self.diff(w * F, i) + w * self.diff(F, i))
            flux = np.zeros_like(F)
            if self.friction and i >= d:
                flux -= self.friction * self.mesh[i] * F
            for j in range(n):
                if self.D[i, j] != 0.0:
                    flux = flux - self.D[i, j] * self.diff(F, j)
            if np.any(flux):
                out -= self.diff(flux, i)
        return out

    def dt_limit(self) -> float:
        # RK4 stability reaches 2.8 on the imaginary axis and 2.78 on the real
        # axis; spectral radii of the per-axis operators add up.
        adv = 0.0
        dif = 0.0
        for i, h in enumerate(self.grid.spacing):
            kmax = math.pi / h
            adv += kmax * float(np.max(np.abs(self.w[i])))
            dif += kmax**2 * self.D[i, i]
        rate = adv / 2.8 + dif / 2.78
        return CFL_SAFETY / rate if rate > 0 else math.inf


def phase_space_rhs(state: StateField, model: PhaseSpaceModel) -> np.ndarray:
    """Time derivative of the phase-space density under ``model``."""
    return _SpectralOperator(state.grid, model).rhs(np.asarray(state.values, dtype=float))


def phase_space_cfl_limit(grid: Grid, model: PhaseSpaceModel) -> float:
    return _SpectralOperator(grid, model).dt_limit()


def _neg_entropy_integral(F: np.ndarray, dv: float) -> float:
    pos = F[F > 0]
    return float(-np.sum(pos * np.log(pos)) * dv)


def fp_phase_space_evolve(
    state: StateField,
    model: PhaseSpaceModel,
    t_span: Sequence[float],
    dt: float,
    save_every: int | None = None,
    monitor: Callable[[StateField], float] | None = None,
) -> FPTrajectory:
    """Liouville transport plus collision diffusion on a periodic phase-space box.

    The grid is treated as periodic on every axis; densities must decay
    well inside the box.  Diagnostics record per-step mass, ``<H>``,
    ``-int F ln F`` and, when given, ``monitor(state)``.
    """
    grid = state.grid
    op = _SpectralOperator(grid, model)
    limit = op.dt_limit()
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.6g} exceeds the spectral stability limit {limit:.6g}")
    n, h, t0 = _n_steps(t_span, dt)
    F = np.array(state.values, dtype=float)
    dv = grid.cell_volume
    H = model.hamiltonian(*grid.mesh())
    masses = np.empty(n + 1)
    energy = np.empty(n + 1)
    entropy = np.empty(n + 1)
    watched = np.empty(n + 1) if monitor else None

    def record(k, F, t):
        masses[k] = F.sum() * dv
        energy[k] = float(np.sum(F * H) * dv)
        entropy[k] = _neg_entropy_integral(F, dv)
        if monitor:
            watched[k] = monitor(state.with_values(F, t))

    record(0, F, t0)
    clipped: list = []
    snaps = [state.with_values(F, t0)]
    for k in range(n):
        k1 = op.rhs(F)
        k2 = op.rhs(F + 0.5 * h * k1)
        k3 = op.rhs(F + 0.5 * h * k2)
        k4 = op.rhs(F + h * k3)
        F = F + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        F = _enforce_nonnegative(F, dv, clipped)
        t = t0 + (k + 1) * h
        record(k + 1, F, t)
        if save_every and (k + 1) % save_every == 0 and k + 1 < n:
            snaps.append(state.with_values(F, t))
    if n:
        snaps.append(state.with_values(F, t0 + n * h))
    diag = {
        "steps": n,
        "dt": h,
        "cfl_limit": limit,
        "clip_events": len(clipped),
        "energy": energy,
        "entropy": entropy,
    }
    if watched is not None:
        diag["monitor"] = watched
    traj = FPTrajectory(np.array([s.time for s in snaps]), snaps, t0 + h * np.arange(n + 1), masses, diag)
    diag["max_step_mass_change"] = traj.max_step_mass_change
    return traj
