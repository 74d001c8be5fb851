"""Wave packets, Wigner quasiprobabilities, Bell tests and Weyl quantization.

Conventions.  The small parameter ``hbar`` plays the role of the inverse
rescaling parameter.  The Wigner transform is

    rho(X, J) = (2 pi hbar)^{-d} int dY conj(psi(X + Y/2)) psi(X - Y/2) exp(i J.Y / hbar)

and the Poisson bracket is ``{f, g} = sum_s (df/dJ_s dg/dX_s - df/dX_s dg/dJ_s)``
so that ``{X, J} = -1``.  The star product ``f * g = f g + (i hbar / 2) {f, g} + ...``
then has commutator ``[X, J]_* = -i hbar``.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp
from scipy.ndimage import gaussian_filter
from scipy.signal import fftconvolve

from .errors import FDNoiseWarning, GridTooCoarse, GridTooLarge, NonPositiveOperator, NotTwoSubsystems
from .fields import Grid, StateField, format_float

__all__ = [
    "WavePacket",
    "WignerField",
    "hermite_function",
    "gaussian_packet",
    "cat_packet",
    "pair_correlated_packet",
    "PAIR_STATE_COEFFS",
    "cross_wigner",
    "wigner_transform",
    "NegativityResult",
    "negativity_volume",
    "CHSHScan",
    "chsh_value",
    "chsh_scan",
    "pair_state_correlator",
    "conjugate_momenta",
    "weyl_grid",
    "weyl_quantize",
    "h_functional",
    "star_terms",
    "star_product",
    "moyal_bracket",
    "poisson_bracket",
    "star_product_grid",
]

MAX_WEYL_AXIS = 128
MAX_WEYL_DIM = 1024

# Pair-correlated amplitudes sum_n c_n |n, n> found by maximizing the
# sign-binned CHSH value over the first five oscillator levels.
PAIR_STATE_COEFFS = (0.521, 0.649, 0.464, 0.282, 0.114)


@dataclass
class WavePacket:
    """Wave function on ``R^d``.

    A packet is either a callable ``psi(*X)`` or, for ``d = 2``, a sum of
    products ``sum_k alpha_k f_k(X_1) g_k(X_2)`` given in ``modes``.  The
    separable form is what makes the four-dimensional Wigner transform
    tractable.
    """

    d: int
    hbar: float
    psi: Callable[..., np.ndarray] | None = None
    modes: list[tuple[complex, Callable, Callable]] = field(default_factory=list)
    phase: Callable[..., np.ndarray] | None = None
    amplitude: Callable[..., np.ndarray] | None = None

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        if self.psi is None and not self.modes:
            raise ValueError("packet needs psi or a mode expansion")

    def __call__(self, *X: np.ndarray) -> np.ndarray:
        if self.psi is not None:
            return np.asarray(self.psi(*X), dtype=complex)
        return sum(a * f(X[0]) * g(X[1]) for a, f, g in self.modes)

    @classmethod
    def wkb(cls, phase: Callable, amplitude: Callable, hbar: float, d: int = 1) -> "WavePacket":
        """``psi = amplitude(X) exp(i phase(X) / hbar)`` with a real phase."""

        def psi(*X):
            S = np.asarray(phase(*X))
            if np.iscomplexobj(S) and np.max(np.abs(S.imag)) > 0:
                raise ValueError("WKB phase must be real")
            return np.asarray(amplitude(*X), dtype=complex) * np.exp(1j * np.real(S) / hbar)

        return cls(d, hbar, psi, phase=phase, amplitude=amplitude)

    def norm(self, grid: Grid) -> float:
        """L2 norm by midpoint quadrature on ``grid`` (over X only)."""
        vals = self(*grid.mesh())
        return float(np.sqrt(np.sum(np.abs(vals) ** 2) * grid.cell_volume))


def hermite_function(n: int, hbar: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Normalized oscillator eigenfunction of ``(X^2 + P^2)/2`` with ``[X, P] = i hbar``."""
    scale = math.sqrt(hbar)

    def phi(x):
        u = np.asarray(x, dtype=float) / scale
        prev = np.zeros_like(u)
        cur = np.pi ** (-0.25) * np.exp(-0.5 * u**2)
        for k in range(n):
            prev, cur = cur, math.sqrt(2.0 / (k + 1)) * u * cur - math.sqrt(k / (k + 1)) * prev
        return cur / math.sqrt(scale)

    return phi


def gaussian_packet(center: float = 0.0, width: float = 1.0, momentum: float = 0.0, hbar: float = 1.0) -> WavePacket:
    """Normalized Gaussian with ``|psi|^2`` of standard deviation ``width / sqrt(2)``."""
    norm = (math.pi * width**2) ** -0.25

    def psi(x):
        return norm * np.exp(-((x - center) ** 2) / (2 * width**2) + 1j * momentum * x / hbar)

    return WavePacket(1, hbar, psi)


def cat_packet(a: float = 2.0, hbar: float = 1.0, sign: float = 1.0) -> WavePacket:
    """Normalized superposition of two Gaussians at ``+-a``."""
    norm = 1.0 / math.sqrt(2.0 * math.sqrt(math.pi) * (1.0 + sign * math.exp(-(a**2) / hbar)) * math.sqrt(hbar))

    def psi(x):
        return norm * (np.exp(-((x - a) ** 2) / (2 * hbar)) + sign * np.exp(-((x + a) ** 2) / (2 * hbar))) + 0j

    return WavePacket(1, hbar, psi)


def pair_correlated_packet(coeffs: Sequence[complex] = PAIR_STATE_COEFFS, hbar: float = 1.0) -> WavePacket:
    """Two-mode state ``sum_n c_n phi_n(X_1) phi_n(X_2)`` (normalized)."""
    c = np.asarray(coeffs, dtype=complex)
    c = c / np.linalg.norm(c)
    modes = [(complex(c[n]), hermite_function(n, hbar), hermite_function(n, hbar)) for n in range(c.size)]
    return WavePacket(2, hbar, None, modes)


@dataclass
class WignerField:
    """Real quasiprobability on a ``2d``-dimensional (X, J) grid."""

    grid: Grid
    values: np.ndarray
    hbar: float
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.grid.ndim // 2

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    def marginal_X(self) -> np.ndarray:
        """Integral over the momentum axes, on the X sub-grid."""
        h = self.grid.spacing
        axes = tuple(range(self.d, 2 * self.d))
        return np.sum(self.values, axis=axes) * float(np.prod(h[self.d :]))

    def diffused(self, t: float) -> "WignerField":
        """Convolution with an isotropic Gaussian of variance ``2 t`` per axis."""
        if t <= 0:
            return WignerField(self.grid, self.values.copy(), self.hbar, dict(self.meta))
        sig = np.sqrt(2.0 * t) / self.grid.spacing
        return WignerField(self.grid, gaussian_filter(self.values, sig, mode="constant"), self.hbar, dict(self.meta))

    def as_state(self) -> StateField:
        labels = tuple(f"X{s + 1}" for s in range(self.d)) + tuple(f"J{s + 1}" for s in range(self.d))
        return StateField(self.grid, self.values, "f", 1.0, labels=labels, meta={"hbar": self.hbar})

    def to_csv(self) -> str:
        return self.as_state().to_csv()


def cross_wigner(f: Callable, g: Callable, x: np.ndarray, p: np.ndarray, hbar: float, n_y: int | None = None) -> np.ndarray:
    """``(2 pi hbar)^-1 int dY conj(f(x + Y/2)) g(x - Y/2) exp(i p Y / hbar)`` on the ``x`` by ``p`` mesh."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    span = 2.0 * (x.max() - x.min() + (x[1] - x[0] if x.size > 1 else 1.0))
    pmax = max(float(np.max(np.abs(p))), 1e-12)
    dy = min(span / 64.0, math.pi * hbar / (4.0 * pmax))
    if n_y is None:
        n_y = 2 * int(math.ceil(span / (2.0 * dy))) + 1
    y = np.linspace(-span / 2, span / 2, n_y)
    dyy = y[1] - y[0]
    prod = np.conj(f(x[:, None] + 0.5 * y[None, :])) * g(x[:, None] - 0.5 * y[None, :])
    kernel = np.exp(1j * np.outer(y, p) / hbar)
    return (prod @ kernel) * dyy / (2.0 * math.pi * hbar)


def wigner_transform(psi: WavePacket, grid: Grid, norm_tol: float = 1e-4) -> WignerField:
    """Quadrature Wigner transform of ``psi`` on a ``2d``-dimensional grid.

    Raises :class:`GridTooCoarse` when the discrete mass misses one by more
    than ``norm_tol``.
    """
    d = psi.d
    if grid.ndim != 2 * d:
        raise ValueError(f"grid must have {2 * d} axes for a d={d} packet")
    axes = grid.axes
    if d == 1:
        W = cross_wigner(psi, psi, axes[0], axes[1], psi.hbar)
    elif d == 2 and psi.modes:
        x1, x2, p1, p2 = axes
        W = np.zeros(grid.shape, dtype=complex)
        for (ak, fk, gk), (al, fl, gl) in itertools.product(psi.modes, repeat=2):
            w1 = cross_wigner(fk, fl, x1, p1, psi.hbar)
            w2 = cross_wigner(gk, gl, x2, p2, psi.hbar)
            W += np.conj(ak) * al * np.einsum("ac,bd->abcd", w1, w2)
    else:
        raise ValueError("multi-dimensional packets need a two-mode product expansion")
    imag = float(np.max(np.abs(W.imag)))
    field_ = WignerField(grid, W.real.copy(), psi.hbar, {"imag_residual": imag})
    mass = field_.mass()
    field_.meta["mass"] = mass
    if abs(mass - 1.0) > norm_tol:
        raise GridTooCoarse(f"Wigner mass {mass:.8g} differs from 1 by more than {norm_tol:.1e}")
    return field_


@dataclass
class NegativityResult:
    volume: float
    witness: float | None = None
    witness_center: tuple[float, ...] | None = None


def negativity_volume(rho: WignerField, bump: Callable[..., np.ndarray] | None = None) -> NegativityResult:
    """``int max(-rho, 0)`` plus the most negative ``int phi(x - c) rho(x)`` over shifts ``c``.

    ``bump`` is a nonnegative function of the offset coordinates; it is
    sampled on a grid-centred stencil and correlated with ``rho``.
    """
    dv = rho.grid.cell_volume
    vol = float(np.sum(np.clip(-rho.values, 0.0, None)) * dv)
    if bump is None:
        return NegativityResult(vol)
    offsets = [h * (np.arange(n) - n // 2) for h, n in zip(rho.grid.spacing, rho.grid.shape)]
    kernel = np.asarray(bump(*np.meshgrid(*offsets, indexing="ij")), dtype=float)
    if np.any(kernel < 0):
        raise ValueError("witness bump must be nonnegative")
    flipped = kernel[tuple(slice(None, None, -1) for _ in range(kernel.ndim))]
    corr = fftconvolve(rho.values, flipped, mode="same") * dv
    idx = np.unravel_index(int(np.argmin(corr)), corr.shape)
    center = tuple(float(ax[i]) for ax, i in zip(rho.grid.axes, idx))
    return NegativityResult(vol, float(corr[idx]), center)


def _binned_observables(grid: Grid, angles: np.ndarray, mode: int, sub: int = 8) -> np.ndarray:
    """Cell averages of ``sign(X cos(theta) + J sin(theta))`` for subsystem ``mode``.

    Each cell is sampled on a ``sub`` by ``sub`` midpoint stencil, which
    turns the first-order error of cells cut by the binning line into a
    much smaller one.  Output is flattened over the subsystem plane.
    """
    hx = grid.spacing[mode]
    hj = grid.spacing[2 + mode]
    off = (np.arange(sub) + 0.5) / sub - 0.5
    X = grid.axes[mode][:, None, None, None] + hx * off[None, None, :, None]
    J = grid.axes[2 + mode][None, :, None, None] + hj * off[None, None, None, :]
    out = np.empty((angles.size, X.shape[0] * J.shape[1]))
    for k, th in enumerate(angles):
        q = math.cos(th) * X + math.sin(th) * J
        out[k] = np.where(q >= 0, 1.0, -1.0).mean(axis=(2, 3)).ravel()
    return out


def _correlators(rho2: WignerField, angles1: np.ndarray, angles2: np.ndarray) -> np.ndarray:
    if rho2.grid.ndim != 4:
        raise NotTwoSubsystems(f"CHSH needs a two-subsystem (4-axis) field, got {rho2.grid.ndim} axes")
    n = rho2.grid.shape
    # reorder to (X1, J1, X2, J2) so each subsystem plane is contiguous
    R = np.transpose(rho2.values, (0, 2, 1, 3)).reshape(n[0] * n[2], n[1] * n[3])
    A = _binned_observables(rho2.grid, np.asarray(angles1, dtype=float), 0)
    B = _binned_observables(rho2.grid, np.asarray(angles2, dtype=float), 1)
    return (A @ R @ B.T) * rho2.grid.cell_volume


def chsh_value(rho2: WignerField, settings: Sequence[float]) -> float:
    """``|E(a,b) + E(a,b') + E(a',b) - E(a',b')|`` for settings ``(a, a', b, b')``."""
    a, a2, b, b2 = (float(s) for s in settings)
    E = _correlators(rho2, np.array([a, a2]), np.array([b, b2]))
    return float(abs(E[0, 0] + E[0, 1] + E[1, 0] - E[1, 1]))


@dataclass
class CHSHScan:
    angles: np.ndarray
    correlators: np.ndarray
    max_S: float
    best_settings: tuple[float, float, float, float]

    @property
    def violates(self) -> bool:
        return self.max_S > 2.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "angles": [format_float(a) for a in self.angles],
                "correlators": [[format_float(v) for v in row] for row in self.correlators],
                "max_S": format_float(self.max_S),
                "best_settings": [format_float(a) for a in self.best_settings],
                "violates": self.violates,
            },
            indent=2,
        )


def _max_chsh(E: np.ndarray) -> tuple[float, tuple[int, int, int, int]]:
    best = -1.0
    arg = (0, 0, 0, 0)
    for i, i2 in itertools.product(range(E.shape[0]), repeat=2):
        # S[j, j2] over all second-party pairs at once
        S = np.abs(E[i][:, None] + E[i][None, :] + E[i2][:, None] - E[i2][None, :])
        k = int(np.argmax(S))
        if S.flat[k] > best:
            best = float(S.flat[k])
            arg = (i, i2, k // E.shape[1], k % E.shape[1])
    return best, arg


def chsh_scan(rho2: WignerField, angles: Sequence[float] | int = 20) -> CHSHScan:
    """Correlators on an angle grid and the best CHSH combination over it."""
    if isinstance(angles, (int, np.integer)):
        angles = np.linspace(0.0, np.pi, int(angles), endpoint=False)
    angles = np.asarray(angles, dtype=float)
    E = _correlators(rho2, angles, angles)
    S, (i, i2, j, j2) = _max_chsh(E)
    return CHSHScan(angles, E, S, (float(angles[i]), float(angles[i2]), float(angles[j]), float(angles[j2])))


def pair_state_correlator(coeffs: Sequence[complex], theta1: float, theta2: float, n_quad: int = 4000) -> float:
    """Exact ``<sign(X_theta1) sign(X_theta2)>`` for ``sum_n c_n |n, n>`` from operator matrix elements.

    Independent of any Wigner grid; used to cross-check :func:`chsh_scan`.
    """
    c = np.asarray(coeffs, dtype=complex)
    c = c / np.linalg.norm(c)
    n = np.arange(c.size)
    L = 2.0 * math.sqrt(2 * c.size + 10)
    dx = 2.0 * L / n_quad
    x = -L + dx * (np.arange(n_quad) + 0.5)
    phi = np.array([hermite_function(k)(x) for k in n])
    s = (phi * np.sign(x)) @ phi.T * dx
    M = np.exp(-1j * (theta1 + theta2) * (n[:, None] - n[None, :])) * s**2
    return float(np.real(np.conj(c) @ M @ c))


def conjugate_momenta(n: int, h_x: float, hbar: float) -> np.ndarray:
    """Momentum lattice dual to ``n`` positions of spacing ``h_x``, centred on zero."""
    dp = 2.0 * math.pi * hbar / (n * h_x)
    return dp * (np.arange(n) - n / 2 + 0.5)


def weyl_grid(n: int, half_width: float, hbar: float) -> Grid:
    """Phase-space grid whose momentum axis is the Weyl dual of its position axis."""
    h = 2.0 * half_width / n
    pmax = math.pi * hbar / h
    return Grid([-half_width, -pmax], [half_width, pmax], n)


def _half_shift(A: np.ndarray) -> np.ndarray:
    """Fourier interpolation of the rows of ``A`` half a cell forward along axis 0."""
    n = A.shape[0]
    k = np.fft.fftfreq(n) * n
    shift = np.exp(1j * np.pi * k / n)
    if n % 2 == 0:
        shift[n // 2] = np.cos(np.pi / 2)
    return np.real(np.fft.ifft(np.fft.fft(A, axis=0) * shift[:, None], axis=0))


def weyl_quantize(symbol, grid: Grid, hbar: float) -> np.ndarray:
    """Discrete Weyl operator of a real phase-space symbol (one degree of freedom).

    ``symbol`` is a callable ``a(X, P)`` or an array on ``grid``.  Matrix
    elements are ``A[j, k] = (1/N) sum_m a(M_jk, P_m) exp(i P_m S_jk / hbar)``
    where ``S_jk`` is the position difference wrapped to the shorter way
    round the periodic box, ``M_jk`` the corresponding midpoint and ``P_m``
    the lattice dual to the positions.  Array symbols are Fourier
    interpolated to half-cell midpoints and linearly interpolated in
    momentum when their momentum axis is not the dual lattice.
    """
    if grid.ndim != 2:
        raise ValueError("weyl_quantize handles one degree of freedom")
    if max(grid.shape) > MAX_WEYL_AXIS:
        raise GridTooLarge(f"grid axis exceeds {MAX_WEYL_AXIS} points")
    X = grid.axes[0]
    n = X.size
    h = grid.spacing[0]
    P = conjugate_momenta(n, h, hbar)
    j = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    wrapped = (j - k + n // 2) % n - n // 2
    if callable(symbol):

        def mid_values(dw):
            pos = grid.lo[0] + (((k + 0.5 * dw) % n) + 0.5) * h
            return np.asarray(symbol(pos[:, :, None], P[None, None, :]), dtype=float) * np.ones((1, 1, n))

    else:
        A = np.asarray(symbol, dtype=float)
        if A.shape != grid.shape:
            raise ValueError(f"symbol shape {A.shape} does not match grid {grid.shape}")
        J = grid.axes[1]
        if not (J.size == n and np.allclose(J, P, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(P)))))):
            A = np.array([np.interp(P, J, row, left=0.0, right=0.0) for row in A])
        A_half = _half_shift(A)

        def mid_values(dw):
            s2 = 2 * k + dw
            even = (s2 % 2) == 0
            idx_even = (s2 // 2) % n
            idx_odd = ((s2 - 1) // 2) % n
            return np.where(even[:, :, None], A[idx_even], A_half[idx_odd])

    def assemble(dw):
        phase = np.exp(1j * (dw * h)[:, :, None] * P[None, None, :] / hbar)
        return np.sum(mid_values(dw) * phase, axis=2) / n

    M = assemble(wrapped)
    if n % 2 == 0:
        # separation of exactly half the box is ambiguous; average both ways round
        amb = np.abs(wrapped) == n // 2
        M = np.where(amb, 0.5 * (M + assemble(np.where(amb, -wrapped, wrapped))), M)
    herm = float(np.max(np.abs(M - M.conj().T)))
    if herm > 1e-10 * max(1.0, float(np.max(np.abs(M)))):
        raise ArithmeticError(f"Weyl matrix not Hermitian (residual {herm:.3g})")
    return 0.5 * (M + M.conj().T)


def h_functional(obj, grid: Grid | None = None, hbar: float | None = None, tol: float = 1e-10) -> float:
    """``sum mu ln mu`` over the eigenvalues of a density operator.

    ``obj`` is either a Hermitian matrix, or a phase-space density (array
    with ``grid`` and ``hbar``, or a :class:`StateField` / :class:`WignerField`)
    that is first normalized to unit mass and quantized to a unit-trace
    operator ``2 pi hbar Op(f)``.  Eigenvalues below ``-tol`` raise
    :class:`NonPositiveOperator`; eigenvalues within ``tol`` of zero carry
    no weight.
    """
    if isinstance(obj, (StateField, WignerField)):
        grid = obj.grid
        vals = obj.density() if isinstance(obj, StateField) else obj.values
        hbar = hbar if hbar is not None else (obj.hbar if isinstance(obj, WignerField) else obj.meta.get("hbar"))
        obj = vals
    M = np.asarray(obj)
    if grid is not None:
        if hbar is None:
            raise ValueError("hbar is required to quantize a phase-space density")
        f = M / (np.sum(M) * grid.cell_volume)
        M = 2.0 * math.pi * hbar * weyl_quantize(f, grid, hbar)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix or a phase-space density with its grid")
    mu = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    lo = float(mu.min())
    if lo < -tol:
        raise NonPositiveOperator(f"operator has eigenvalue {lo:.3g} < 0", lo)
    pos = mu[mu > tol]
    return float(np.sum(pos * np.log(pos)))


# ---------------------------------------------------------------------------
# Moyal star product


def _default_vars(exprs, X, J):
    if X is None or J is None:
        X = X or (sp.Symbol("X1"),)
        J = J or (sp.Symbol("J1"),)
    return tuple(X), tuple(J)


def _bidiff_power(f, g, s: int, X, J):
    """``Pi^s (f, g)`` with ``Pi = sum_t (d/dJ_t (x) d/dX_t - d/dX_t (x) d/dJ_t)``."""
    d = len(X)
    Xa = sp.symbols(f"xa0:{d}", real=True)
    Ja = sp.symbols(f"ja0:{d}", real=True)
    Xb = sp.symbols(f"xb0:{d}", real=True)
    Jb = sp.symbols(f"jb0:{d}", real=True)
    F = sp.sympify(f).subs(dict(zip(X + J, Xa + Ja)), simultaneous=True)
    G = sp.sympify(g).subs(dict(zip(X + J, Xb + Jb)), simultaneous=True)
    # expand Pi^s as a multinomial over the 2d commuting elementary operators
    ops = [(Ja[t], Xb[t], 1) for t in range(d)] + [(Xa[t], Jb[t], -1) for t in range(d)]
    total = sp.Integer(0)
    for combo in itertools.combinations_with_replacement(range(len(ops)), s):
        counts = [combo.count(k) for k in range(len(ops))]
        coeff = math.factorial(s)
        for c in counts:
            coeff //= math.factorial(c)
        sign = 1
        dF = F
        dG = G
        for k, c in enumerate(counts):
            if c:
                ua, ub, sg = ops[k]
                dF = sp.diff(dF, ua, c)
                dG = sp.diff(dG, ub, c)
                sign *= sg**c
        total += coeff * sign * dF * dG
    back = dict(zip(Xa + Ja, X + J))
    back.update(dict(zip(Xb + Jb, X + J)))
    return sp.expand(total.subs(back, simultaneous=True))


def star_terms(f, g, order: int, X: Sequence[sp.Symbol] | None = None, J: Sequence[sp.Symbol] | None = None) -> list:
    """Bidifferential terms ``B_0 .. B_order`` with ``B_s = (i/2)^s / s! Pi^s(f, g)``."""
    X, J = _default_vars((f, g), X, J)
    return [sp.expand(sp.Rational(1, math.factorial(s)) * (sp.I / 2) ** s * _bidiff_power(f, g, s, X, J)) for s in range(order + 1)]


def star_product(f, g, order: int = 2, k_B=None, X=None, J=None):
    """``f g + sum_{s <= order} k_B^s B_s(f, g)`` as a sympy expression.

    ``k_B`` may be a number or a symbol; by default the symbol ``k_B``.
    """
    k = sp.Symbol("k_B", positive=True) if k_B is None else sp.sympify(k_B)
    return sp.expand(sum(k**s * B for s, B in enumerate(star_terms(f, g, order, X, J))))


def moyal_bracket(f, g, order: int = 2, k_B=None, X=None, J=None):
    """``(f * g - g * f) / (i k_B)``; reduces to ``{f, g}`` at leading order."""
    k = sp.Symbol("k_B", positive=True) if k_B is None else sp.sympify(k_B)
    comm = star_product(f, g, order, k, X, J) - star_product(g, f, order, k, X, J)
    return sp.simplify(sp.expand(comm / (sp.I * k)))


def poisson_bracket(f, g, X=None, J=None):
    X, J = _default_vars((f, g), X, J)
    return sp.expand(sum(sp.diff(f, j) * sp.diff(g, x) - sp.diff(f, x) * sp.diff(g, j) for x, j in zip(X, J)))


def star_product_grid(f: np.ndarray, g: np.ndarray, grid: Grid, order: int = 1, k_B: float = 1.0) -> np.ndarray:
    """Star product of sampled functions on a ``(X, J)`` grid (one degree of freedom).

    Derivatives use second-order central differences, so results carry
    discretization error; :class:`FDNoiseWarning` flags grids fine enough
    for round-off to dominate the requested derivatives.
    """
    if grid.ndim != 2:
        raise ValueError("star_product_grid handles one degree of freedom")
    if order > 2:
        raise ValueError("grid star product supports order <= 2")
    hx, hj = grid.spacing

    def dX(a):
        return np.gradient(a, hx, axis=0, edge_order=2)

    def dJ(a):
        return np.gradient(a, hj, axis=1, edge_order=2)

    scale = max(float(np.max(np.abs(f))), float(np.max(np.abs(g))), 1e-300)
    if order and np.finfo(float).eps * scale / min(hx, hj) ** (2 * order) > 1e-6 * scale:
        warnings.warn("finite-difference round-off dominates at this spacing", FDNoiseWarning, stacklevel=2)
    out = (f * g).astype(complex)
    if order >= 1:
        out = out + k_B * 0.5j * (dJ(f) * dX(g) - dX(f) * dJ(g))
    if order >= 2:
        pi2 = dJ(dJ(f)) * dX(dX(g)) - 2.0 * dJ(dX(f)) * dX(dJ(g)) + dX(dX(f)) * dJ(dJ(g))
        out = out + k_B**2 * (-0.125) * pi2
    return out
