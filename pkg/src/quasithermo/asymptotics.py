"""Stationary-phase transfer of fluctuation series between focal charts.

A fluctuation series on chart ``I`` is a leading phase ``Phi0`` (a
:class:`~quasithermo.manifold.ChartFunction`) plus tail coefficients
``Phi1, Phi2, ...``.  It stands for the oscillatory amplitude

    exp(i Phi0 / eps) * exp(Phi1 + (-i eps) Phi2 + ...)

Moving it to chart ``J`` integrates over the positions in ``I ^ J``:

    Q(eps) = (2 pi eps)**(-k/2) * int f(u) exp(i/eps [Phi0(u, w) - sum_k s_k p_k u_k]) du

with ``s_k = +1`` for positions becoming intensive and ``-1`` for positions
becoming extensive, so the stationary value is exactly the Legendre
transform.  The transfer keeps orders 0 and 1 of the stationary-phase
expansion

    Q ~ exp(i PhiJ / eps) exp(i pi mu / 4) [V0 f + (-i eps) V1 f + O(eps**2)]

and re-exponentiates the result with :func:`~quasithermo.series.log_coeffs`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateHessian, MultipleStationaryPoints, QuadratureNonConvergence
from .manifold import (
    DET_FLOOR,
    Box,
    ChartFunction,
    FocalChartSpec,
    legendre_transform,
    manifold_point,
    newton_solve,
)
from .series import SeriesField, TruncatedSeries, log_coeffs

__all__ = [
    "TransferSpec",
    "TransferResult",
    "FluctuationSeries",
    "StationaryPhaseTerms",
    "make_transfer_spec",
    "oscillatory_integral",
    "stationary_phase_coeffs",
    "transfer_series",
    "check_cocycle_N",
    "remainder_slope",
]

AMP_REL_STEP = 1e-4
PHASE_REL_STEP = 1e-4
PHASE_REL_STEP_NO_HESSIAN = 2e-3
QUAD_RTOL = 1e-6
DEFAULT_EPSILONS = (0.1, 0.05, 0.025, 0.0125)


@dataclass
class TransferSpec:
    """One chart change ``from_chart -> to_chart`` driven by ``phase``.

    ``maslov`` is the signature of the transformed Hessian block, stored
    modulo 8 (the phase factor is ``exp(i pi maslov / 4)``).  ``box`` bounds
    the integration variables for the quadrature oracle.
    """

    from_chart: FocalChartSpec
    to_chart: FocalChartSpec
    phase: ChartFunction
    maslov: int
    epsilon_grid: tuple[float, ...] = DEFAULT_EPSILONS
    box: Box | None = None

    @property
    def transformed(self) -> np.ndarray:
        I = self.from_chart.focal_set
        J = self.to_chart.focal_set
        return np.array(sorted(k - 1 for k in (I ^ J)), dtype=int)

    @property
    def signs(self) -> np.ndarray:
        J = self.to_chart.focal_set
        return np.array([1.0 if (k + 1) in J else -1.0 for k in self.transformed])

    @property
    def phase_factor(self) -> complex:
        return complex(np.exp(1j * np.pi * self.maslov / 4.0))


def _signature(H: np.ndarray) -> int:
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    return int(np.sum(ev > 0) - np.sum(ev < 0))


def make_transfer_spec(
    phase: ChartFunction,
    to_chart,
    reference_point=None,
    epsilon_grid: Sequence[float] = DEFAULT_EPSILONS,
    box: Box | None = None,
) -> TransferSpec:
    """Build a :class:`TransferSpec`, fixing the Maslov constant at a reference point.

    ``reference_point`` is a target-chart point; by default the image of the
    phase's reference point is used.
    """
    to_chart = to_chart if isinstance(to_chart, FocalChartSpec) else phase.chart.with_focal(to_chart)
    spec = TransferSpec(phase.chart, to_chart, phase, 0, tuple(epsilon_grid), box)
    if spec.transformed.size == 0:
        return spec
    if reference_point is None:
        if phase.reference is None:
            raise ValueError("need a reference point to fix the Maslov constant")
        reference_point = manifold_point(phase, phase.reference).chart_coords(to_chart)
    sp = _StationaryPoint(spec, np.asarray(reference_point, dtype=float))
    spec.maslov = _signature(sp.hess) % 8
    return spec


class _StationaryPoint:
    """Stationary point of the shifted phase for one target-chart point."""

    def __init__(self, spec: TransferSpec, target_point: np.ndarray):
        self.spec = spec
        self.target = np.asarray(target_point, dtype=float)
        T = spec.transformed
        self.T = T
        self.s = spec.signs
        self.p = self.target[T]
        self.legendre = _legendre_for(spec)
        sol = self.legendre.solve(self.target) if T.size else None
        if sol is None:
            self.z_from = self.target.copy()
            self.hess = np.zeros((0, 0))
        else:
            self.z_from = sol.z_from
            self.hess = sol.hess[np.ix_(T, T)]
        self.u = self.z_from[T]

    def phase_value(self) -> float:
        return float(self.spec.phase(self.z_from) - np.sum(self.s * self.p * self.u))

    def embed(self, u: np.ndarray) -> np.ndarray:
        z = self.z_from.copy()
        z[self.T] = u
        return z


_LEGENDRE_CACHE: dict[tuple[int, frozenset], ChartFunction] = {}


def _legendre_for(spec: TransferSpec) -> ChartFunction:
    """Legendre transform of the spec's phase, shared across calls."""
    key = (id(spec.phase), spec.to_chart.focal_set)
    hit = _LEGENDRE_CACHE.get(key)
    if hit is None or getattr(hit, "source", None) is not spec.phase:
        if spec.from_chart.focal_set == spec.to_chart.focal_set:
            hit = spec.phase
        else:
            hit = legendre_transform(spec.phase, spec.from_chart.focal_set, spec.to_chart.focal_set)
        if len(_LEGENDRE_CACHE) > 64:
            _LEGENDRE_CACHE.clear()
        _LEGENDRE_CACHE[key] = hit
    return hit


def _phase_tensors(phase: ChartFunction, z: np.ndarray, T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Third and fourth derivatives of ``phase`` along positions ``T`` at ``z``.

    Central differences of the Hessian; the result is symmetrized.
    """
    k = T.size
    rel = PHASE_REL_STEP if phase.has_analytic_hessian else PHASE_REL_STEP_NO_HESSIAN
    h = rel * np.maximum(1.0, np.abs(z[T]))

    def H(shift):
        zz = z.copy()
        zz[T] += shift
        return phase.hessian(zz)[np.ix_(T, T)]

    H0 = H(np.zeros(k))
    third = np.zeros((k, k, k))
    fourth = np.zeros((k, k, k, k))
    plus = {}
    minus = {}
    for c in range(k):
        e = np.zeros(k)
        e[c] = h[c]
        plus[c] = H(e)
        minus[c] = H(-e)
        third[:, :, c] = (plus[c] - minus[c]) / (2 * h[c])
        fourth[:, :, c, c] = (plus[c] - 2 * H0 + minus[c]) / h[c] ** 2
    for c in range(k):
        for d in range(c + 1, k):
            ec = np.zeros(k)
            ed = np.zeros(k)
            ec[c] = h[c]
            ed[d] = h[d]
            mixed = (H(ec + ed) - H(ec - ed) - H(-ec + ed) + H(-ec - ed)) / (4 * h[c] * h[d])
            fourth[:, :, c, d] = mixed
            fourth[:, :, d, c] = mixed
    third = _symmetrize(third)
    fourth = _symmetrize(fourth)
    return third, fourth


def _symmetrize(t: np.ndarray) -> np.ndarray:
    perms = list(itertools.permutations(range(t.ndim)))
    return sum(np.transpose(t, p) for p in perms) / len(perms)


def _amplitude_jet(amplitude: Callable, sp: _StationaryPoint):
    """Value, gradient and Hessian of ``amplitude`` along the integration variables."""
    T = sp.T
    k = T.size
    z = sp.z_from
    f0 = complex(amplitude(z))
    grad = np.zeros(k, dtype=complex)
    hess = np.zeros((k, k), dtype=complex)
    h = AMP_REL_STEP * np.maximum(1.0, np.abs(z[T]))

    def f(shift):
        zz = z.copy()
        zz[T] += shift
        return complex(amplitude(zz))

    for a in range(k):
        e = np.zeros(k)
        e[a] = h[a]
        fp, fm = f(e), f(-e)
        grad[a] = (fp - fm) / (2 * h[a])
        hess[a, a] = (fp - 2 * f0 + fm) / h[a] ** 2
        for b in range(a + 1, k):
            e2 = np.zeros(k)
            e2[b] = h[b]
            val = (f(e + e2) - f(e - e2) - f(-e + e2) + f(-e - e2)) / (4 * h[a] * h[b])
            hess[a, b] = hess[b, a] = val
    return f0, grad, hess


@dataclass
class StationaryPhaseTerms:
    """Order-0 and order-1 stationary-phase data at one target point."""

    target_point: np.ndarray
    source_point: np.ndarray
    phase_value: float
    maslov: int
    order0: complex
    order1: complex | None = None

    def approximation(self, eps: float, order: int = 1) -> complex:
        """``exp(i PhiJ/eps + i pi mu/4) (V0 + (-i eps) V1)``."""
        total = self.order0
        if order >= 1 and self.order1 is not None:
            total = total + (-1j * eps) * self.order1
        return complex(np.exp(1j * self.phase_value / eps + 1j * np.pi * self.maslov / 4.0) * total)


def stationary_phase_coeffs(
    phase: ChartFunction,
    amplitude: Callable[[np.ndarray], complex],
    order: int,
    target_point,
    spec: TransferSpec | None = None,
    to_chart=None,
    check_box: Box | None = None,
) -> StationaryPhaseTerms:
    """Order-0 and (optionally) order-1 stationary-phase coefficients.

    Order 0 is ``f(u*) |det H|**(-1/2)``; order 1 is the standard
    second-order term built from the amplitude's first two and the phase's
    third and fourth derivatives at the stationary point.  Either ``spec`` or
    ``to_chart`` selects the integration variables.  With ``check_box`` the
    shifted phase is also searched for further stationary points from a grid
    of starts; finding one raises :class:`MultipleStationaryPoints`.
    """
    if order not in (0, 1):
        raise ValueError("only orders 0 and 1 are implemented")
    if spec is None:
        if to_chart is None:
            raise ValueError("pass a TransferSpec or a target chart")
        spec = make_transfer_spec(phase, to_chart, reference_point=target_point)
    elif spec.phase is not phase:
        spec = TransferSpec(spec.from_chart, spec.to_chart, phase, spec.maslov, spec.epsilon_grid, spec.box)
    target_point = np.asarray(target_point, dtype=float)
    sp = _StationaryPoint(spec, target_point)
    k = sp.T.size
    if k == 0:
        f0 = complex(amplitude(target_point))
        return StationaryPhaseTerms(target_point, target_point, phase(target_point), 0, f0, 0.0 if order else None)

    H = sp.hess
    det = np.linalg.det(H)
    if abs(det) <= DET_FLOOR:
        raise DegenerateHessian(f"|det Hessian| = {abs(det):.3e} at {sp.z_from}")
    sig = _signature(H) % 8
    if sig != spec.maslov % 8:
        raise DegenerateHessian(
            f"Hessian signature changed ({sig} vs stored {spec.maslov}); the path crosses a degeneracy"
        )
    if check_box is not None:
        _check_unique(spec, sp, check_box)
    scale = abs(det) ** -0.5
    f0, fg, fh = _amplitude_jet(amplitude, sp)
    order0 = f0 * scale
    order1 = None
    if order >= 1:
        G = np.linalg.inv(H)
        third, fourth = _phase_tensors(phase, sp.z_from, sp.T)
        term_ff = -0.5 * np.einsum("ab,ab->", G, fh)
        quartic = np.einsum("ab,cd,abcd->", G, G, fourth)
        mixed = np.einsum("a,ab,cd,bcd->", fg, G, G, third)
        A = np.einsum("abc,def,ab,de,cf->", third, third, G, G, G)
        B = np.einsum("abc,def,ad,be,cf->", third, third, G, G, G)
        bracket = term_ff + (f0 * quartic + 4.0 * mixed) / 8.0 - f0 * (A / 8.0 + B / 12.0)
        order1 = complex(bracket * scale)
    return StationaryPhaseTerms(target_point, sp.z_from, sp.phase_value(), int(spec.maslov), complex(order0), order1)


def _check_unique(spec: TransferSpec, sp: _StationaryPoint, box: Box, per_axis: int = 5) -> None:
    T = sp.T
    target = sp.s * sp.p
    phase = spec.phase

    def residual(u):
        z = sp.embed(u)
        return phase.gradient(z)[T] - target, phase.hessian(z)[np.ix_(T, T)]

    found = [sp.u]
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(box.lo, box.hi)]
    for start in itertools.product(*axes):
        try:
            u, _, _ = newton_solve(residual, np.array(start), feasible=box.contains)
        except Exception:
            continue
        if all(np.linalg.norm(u - v) > 1e-6 * (1 + np.linalg.norm(v)) for v in found):
            found.append(u)
    if len(found) > 1:
        raise MultipleStationaryPoints(f"{len(found)} stationary points in the box", points=found)


def oscillatory_integral(
    phase: ChartFunction,
    amplitude: Callable[[np.ndarray], complex],
    spec: TransferSpec,
    eps: float,
    target_point,
    box: Box | None = None,
    n_start: int = 1025,
    n_max: int = 2**16 + 1,
) -> complex:
    """Quadrature value of the oscillatory integral (test oracle).

    Trapezoid rule on a tensor grid over ``box`` (the integration variables
    only), refined by doubling until successive values agree to 1e-6
    relative.  The amplitude should vanish at the box edges.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    target_point = np.asarray(target_point, dtype=float)
    T = spec.transformed
    s = spec.signs
    p = target_point[T]
    k = T.size
    box = box or spec.box
    if k == 0:
        return complex(amplitude(target_point) * np.exp(1j * phase(target_point) / eps))
    if box is None:
        raise ValueError("an integration box is required")
    if k > 2:
        raise ValueError("quadrature oracle supports at most two integration variables")
    n_start_axis = n_start if k == 1 else min(n_start, 257)
    n_max_axis = n_max if k == 1 else min(n_max, 2049)

    def integrate(n: int) -> complex:
        axes = [np.linspace(lo, hi, n) for lo, hi in zip(box.lo, box.hi)]
        weights = []
        for ax in axes:
            w = np.full(n, ax[1] - ax[0])
            w[0] *= 0.5
            w[-1] *= 0.5
            weights.append(w)
        total = 0.0 + 0.0j
        for idx in itertools.product(range(n), repeat=k):
            u = np.array([axes[j][idx[j]] for j in range(k)])
            z = target_point.copy()
            z[T] = u
            fval = amplitude(z)
            if fval == 0:
                continue
            wgt = np.prod([weights[j][idx[j]] for j in range(k)])
            total += wgt * fval * np.exp(1j * (phase(z) - np.sum(s * p * u)) / eps)
        return total * (2 * np.pi * eps) ** (-k / 2)

    batch = getattr(phase, "batch", None)
    amp_batch = getattr(amplitude, "batch", None)
    if batch is not None and amp_batch is not None:

        def integrate(n: int) -> complex:  # noqa: F811 - vectorized variant
            axes = [np.linspace(lo, hi, n) for lo, hi in zip(box.lo, box.hi)]
            mesh = np.meshgrid(*axes, indexing="ij")
            U = np.stack([m.ravel() for m in mesh], axis=-1)
            Z = np.repeat(target_point[None, :], U.shape[0], axis=0)
            Z[:, T] = U
            w = np.ones(U.shape[0])
            for j, ax in enumerate(axes):
                wj = np.full(n, ax[1] - ax[0])
                wj[0] *= 0.5
                wj[-1] *= 0.5
                w *= wj[np.unravel_index(np.arange(U.shape[0]), (n,) * k)[j]]
            vals = amp_batch(Z) * np.exp(1j * (batch(Z) - U @ (s * p)) / eps)
            return complex(np.sum(w * vals)) * (2 * np.pi * eps) ** (-k / 2)

    n = n_start_axis
    prev = integrate(n)
    while True:
        n = 2 * n - 1
        if n > n_max_axis:
            raise QuadratureNonConvergence(f"no agreement to {QUAD_RTOL} up to {n_max_axis} nodes per axis")
        cur = integrate(n)
        scale = max(abs(cur), 1e-300)
        if abs(cur - prev) <= QUAD_RTOL * scale or (abs(cur) == 0 and abs(prev) == 0):
            return cur
        prev = cur


@dataclass
class FluctuationSeries:
    """Leading phase plus tail coefficients ``Phi1, Phi2, ...`` on one chart.

    Tails are callables of the chart coordinates; ``None`` means zero.
    """

    phase: ChartFunction
    tails: tuple = (None, None)

    @property
    def chart(self) -> FocalChartSpec:
        return self.phase.chart

    @property
    def order(self) -> int:
        return len(self.tails) - 1

    def tail(self, m: int, z) -> float:
        fn = self.tails[m]
        return 0.0 if fn is None else float(np.real(fn(np.asarray(z, dtype=float))))

    def coefficients(self, z) -> np.ndarray:
        """``[Phi0, Phi1, ..., Phi_{K+1}]`` at one chart point."""
        z = np.asarray(z, dtype=float)
        return np.array([self.phase(z)] + [self.tail(m, z) for m in range(len(self.tails))])

    def amplitude(self, eps: float | None = None) -> Callable[[np.ndarray], complex]:
        """``exp(Phi1 + (-i eps) Phi2 + ...)``; with ``eps=None`` only ``exp(Phi1)``."""

        def amp(z):
            b = [self.tail(m, z) for m in range(len(self.tails))]
            if eps is None:
                return math.exp(b[0])
            expo = sum((-1j * eps) ** m * b[m] / math.factorial(m) for m in range(len(b)))
            return complex(np.exp(expo))

        return amp

    def tabulate(self, axes: Sequence[np.ndarray]) -> SeriesField:
        funcs = [self.phase] + [(lambda z, m=m: self.tail(m, z)) for m in range(len(self.tails))]
        return SeriesField.tabulate(axes, funcs, tuple(self.chart.labels()))

    @classmethod
    def from_field(cls, phase: ChartFunction, field: SeriesField, method: str = "cubic") -> "FluctuationSeries":
        """Interpolate the tail orders of a tabulated field (orders 1.. of ``field``)."""
        from scipy.interpolate import RegularGridInterpolator

        tails = []
        for m in range(1, field.order + 1):
            interp = RegularGridInterpolator(field.axes, np.real(field.order_slice(m)), method=method)
            tails.append(lambda z, f=interp: float(f(np.atleast_2d(z))[0]))
        return cls(phase, tuple(tails))


@dataclass
class TransferResult:
    """Output of one transfer: lazy series on the target chart plus tabulation and diagnostics."""

    series: FluctuationSeries
    series_out: SeriesField | None
    diagnostics: dict = field(default_factory=dict)


class _TransferredTail:
    """Lazy evaluation of the transferred tails at target-chart points."""

    def __init__(self, source: FluctuationSeries, spec: TransferSpec):
        self.source = source
        self.spec = spec
        self.order = min(source.order, 1)
        self._cache: dict[bytes, tuple[float, ...]] = {}

    def coefficients(self, z) -> tuple[float, ...]:
        z = np.asarray(z, dtype=float)
        key = z.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        src = self.source
        b = [lambda zz, m=m: src.tail(m, zz) for m in range(self.order + 1)]
        a0 = lambda zz: math.exp(b[0](zz))
        need_v1 = self.order >= 1
        t0 = stationary_phase_coeffs(self.spec.phase, a0, 1 if need_v1 else 0, z, spec=self.spec)
        a_prime = [t0.order0.real]
        if need_v1:
            # a_1 = a_0 * b_1 for the exponential coefficient map
            a1 = lambda zz: a0(zz) * b[1](zz)
            t1 = stationary_phase_coeffs(self.spec.phase, a1, 0, z, spec=self.spec)
            a_prime.append((t1.order0 + t0.order1).real)
        if a_prime[0] <= 0:
            raise DegenerateHessian(f"order-0 multiplier not positive at {z}")
        out = tuple(log_coeffs(TruncatedSeries(a_prime)).coeffs)
        self._cache[key] = out
        if len(self._cache) > 4096:
            self._cache.clear()
        return out

    def tail(self, m: int):
        return lambda z: self.coefficients(z)[m]


def transfer_series(
    source: FluctuationSeries,
    spec: TransferSpec,
    target_axes: Sequence[np.ndarray] | None = None,
    oracle: bool = False,
    oracle_point=None,
) -> TransferResult:
    """Four-step transfer of a fluctuation series to ``spec.to_chart`` (orders <= 1).

    1. ``Phi0`` on the target chart is the Legendre transform of the input phase.
    2. The tails become exponential coefficients ``a = exp_coeffs(Phi1, Phi2, ...)``.
    3. ``a'_n = sum_m V^(n-m) a_m`` with the order-0 and order-1 operators.
    4. The target tails are ``log_coeffs(a')``.

    With ``target_axes`` the result is tabulated on that grid.  ``oracle``
    compares against quadrature at ``oracle_point`` over ``spec.epsilon_grid``
    and records the residuals and their log-log slope.
    """
    if spec.from_chart.focal_set != source.chart.focal_set:
        raise ValueError("spec does not start on the series chart")
    if spec.phase is not source.phase:
        spec = TransferSpec(spec.from_chart, spec.to_chart, source.phase, spec.maslov, spec.epsilon_grid, spec.box)
    if spec.from_chart.focal_set == spec.to_chart.focal_set:
        out = source
    else:
        lazy = _TransferredTail(source, spec)
        phase_J = _legendre_for(spec)
        out = FluctuationSeries(phase_J, tuple(lazy.tail(m) for m in range(lazy.order + 1)))
    diagnostics: dict = {"maslov": int(spec.maslov), "from": sorted(spec.from_chart.focal_set), "to": sorted(spec.to_chart.focal_set)}
    table = None
    if target_axes is not None:
        table = out.tabulate(target_axes)
        pts = table.points()
        mult = np.exp(table.order_slice(1).ravel())
        diagnostics["min_order0_multiplier"] = float(np.min(mult))
        if spec.transformed.size:
            leg = _legendre_for(spec)
            diagnostics["legendre_residual"] = float(
                max(abs(out.phase(z) - leg(z)) for z in pts)
            )
    if oracle:
        if oracle_point is None:
            raise ValueError("oracle_point required for the quadrature comparison")
        diagnostics["oracle"] = _oracle_residuals(source, spec, out, np.asarray(oracle_point, dtype=float))
    return TransferResult(out, table, diagnostics)


def _oracle_residuals(source: FluctuationSeries, spec: TransferSpec, out: FluctuationSeries, z) -> dict:
    coeffs = [out.tail(m, z) for m in range(len(out.tails))]
    phase_J = out.phase(z)
    residuals = []
    for eps in spec.epsilon_grid:
        q = oscillatory_integral(spec.phase, source.amplitude(eps), spec, eps, z)
        stripped = q * np.exp(-1j * phase_J / eps - 1j * np.pi * spec.maslov / 4.0)
        g = np.log(stripped)
        approx = coeffs[0] + ((-1j * eps) * coeffs[1] if len(coeffs) > 1 else 0.0)
        residuals.append(float(abs(g - approx)))
    return {
        "epsilons": list(spec.epsilon_grid),
        "residuals": residuals,
        "slope": remainder_slope(spec.epsilon_grid, residuals),
    }


def remainder_slope(epsilons: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of ``log residual`` against ``log eps``."""
    x = np.log(np.asarray(epsilons, dtype=float))
    y = np.log(np.asarray(residuals, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def check_cocycle_N(
    source: FluctuationSeries,
    I,
    J,
    K,
    samples,
    reference_points: dict | None = None,
) -> list[float]:
    """Max deviation per order (``Phi0, Phi1, Phi2``) of the loop ``I -> J -> K -> I``.

    ``reference_points`` may map each target chart (as a frozenset) to a point
    used for fixing its Maslov constant.
    """
    I, J, K = frozenset(I), frozenset(J), frozenset(K)
    if source.chart.focal_set != I:
        raise ValueError("series does not live on chart I")
    refs = reference_points or {}
    current = source
    for target in (J, K, I):
        if current.chart.focal_set == target:
            continue
        spec = make_transfer_spec(current.phase, target, reference_point=refs.get(target))
        current = transfer_series(current, spec).series
    n = len(source.tails) + 1
    n = min(n, len(current.tails) + 1)
    worst = [0.0] * n
    for z in np.atleast_2d(np.asarray(samples, dtype=float)):
        a = source.coefficients(z)[:n]
        b = current.coefficients(z)[:n]
        for m in range(n):
            worst[m] = max(worst[m], float(abs(a[m] - b[m])))
    return worst
