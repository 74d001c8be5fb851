"""Focal charts on thermodynamic Lagrangian manifolds and Legendre transforms between them.

A chart on a manifold with ``d + 1`` degrees of freedom is labelled by the set
``I`` of *intensive* positions (1-based).  Its coordinate vector has length
``d + 1``; position ``k`` holds the intensive coordinate ``y_k`` when ``k`` is
in ``I`` and the extensive coordinate ``x_k`` otherwise.  A generating function
``S_I`` on the chart determines the remaining half of every point through

    y_k = dS_I/dx_k   (k not in I)
    x_k = -dS_I/dy_k  (k in I)

Changing the chart from ``I`` to ``J`` is a partial Legendre transform over
the positions in the symmetric difference ``I ^ J``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateHessian, DomainError, NewtonDivergence

__all__ = [
    "FocalChartSpec",
    "Box",
    "ChartFunction",
    "ManifoldPoint",
    "manifold_point",
    "legendre_transform",
    "check_cocycle_L",
    "glue_map",
    "tau_map",
    "tau_inverse",
    "symplectic_residual",
    "lagrangian_residual",
    "homogeneity_residual",
    "ideal_gas_manifold",
    "quadratic_chart",
    "newton_solve",
    "fd_gradient",
    "fd_hessian",
]

MAX_NEWTON_ITER = 50
NEWTON_TOL = 1e-10
FD_REL_STEP = 1e-5
DET_FLOOR = 1e-10


@dataclass(frozen=True)
class FocalChartSpec:
    d_plus_1: int
    focal_set: frozenset

    def __init__(self, d_plus_1: int, focal_set: Iterable[int] = ()):
        focal = frozenset(int(k) for k in focal_set)
        if d_plus_1 < 1:
            raise ValueError("need at least one degree of freedom")
        if any(k < 1 or k > d_plus_1 for k in focal):
            raise ValueError(f"focal set {sorted(focal)} outside 1..{d_plus_1}")
        if len(focal) == d_plus_1:
            raise ValueError("a focal chart needs at least one extensive coordinate")
        object.__setattr__(self, "d_plus_1", int(d_plus_1))
        object.__setattr__(self, "focal_set", focal)

    def is_intensive(self, k: int) -> bool:
        return k in self.focal_set

    @property
    def intensive_mask(self) -> np.ndarray:
        return np.array([k + 1 in self.focal_set for k in range(self.d_plus_1)])

    def labels(self) -> list[str]:
        return [("y" if k in self.focal_set else "x") + str(k) for k in range(1, self.d_plus_1 + 1)]

    def with_focal(self, focal_set: Iterable[int]) -> "FocalChartSpec":
        return FocalChartSpec(self.d_plus_1, focal_set)

    def __repr__(self) -> str:
        return f"FocalChartSpec({self.d_plus_1}, {sorted(self.focal_set)})"


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __init__(self, lo: Sequence[float], hi: Sequence[float]):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, z: np.ndarray) -> bool:
        return bool(np.all(z >= self.lo) and np.all(z <= self.hi))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random((n, self.lo.size))


def _fd_step(z: np.ndarray, rel: float) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(z))


def fd_gradient(fn: Callable[[np.ndarray], float], z: np.ndarray, rel: float = FD_REL_STEP) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    h = _fd_step(z, rel)
    g = np.empty_like(z)
    for k in range(z.size):
        e = np.zeros_like(z)
        e[k] = h[k]
        g[k] = (fn(z + e) - fn(z - e)) / (2.0 * h[k])
    return g


def fd_hessian(grad: Callable[[np.ndarray], np.ndarray], z: np.ndarray, rel: float = FD_REL_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``grad``, symmetrized."""
    z = np.asarray(z, dtype=float)
    h = _fd_step(z, rel)
    n = z.size
    H = np.empty((n, n))
    for k in range(n):
        e = np.zeros_like(z)
        e[k] = h[k]
        H[:, k] = (grad(z + e) - grad(z - e)) / (2.0 * h[k])
    return 0.5 * (H + H.T)


class ChartFunction:
    """Generating function on one focal chart.

    ``value`` maps a coordinate vector to a scalar in entropy units.  Analytic
    ``gradient`` and ``hessian`` are optional; missing derivatives fall back to
    central differences.  ``domain`` is an optional coordinate box used by
    solvers to reject steps and by samplers.
    """

    def __init__(
        self,
        chart: FocalChartSpec,
        value: Callable[[np.ndarray], float],
        gradient: Callable[[np.ndarray], np.ndarray] | None = None,
        hessian: Callable[[np.ndarray], np.ndarray] | None = None,
        domain: Box | None = None,
        name: str = "",
        reference: Sequence[float] | None = None,
    ):
        self.chart = chart
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.domain = domain
        self.name = name or "S"
        if reference is None and domain is not None:
            reference = domain.center
        self.reference = None if reference is None else np.asarray(reference, dtype=float)

    @property
    def dim(self) -> int:
        return self.chart.d_plus_1

    @property
    def has_analytic_hessian(self) -> bool:
        return self._hessian is not None

    def __call__(self, z) -> float:
        return float(self._value(np.asarray(z, dtype=float)))

    def gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self._gradient is not None:
            return np.asarray(self._gradient(z), dtype=float)
        return fd_gradient(self._value, z)

    def hessian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self._hessian is not None:
            return np.asarray(self._hessian(z), dtype=float)
        return fd_hessian(self.gradient, z)

    def shifted(self, constant: float) -> "ChartFunction":
        """Same function plus an additive constant (derivatives unchanged)."""
        value = self._value
        return ChartFunction(
            self.chart,
            lambda z: value(z) + constant,
            self._gradient,
            self._hessian,
            self.domain,
            self.name,
            self.reference,
        )

    def pinned(self, anchor: Sequence[float], value: float) -> "ChartFunction":
        """Fix the additive constant so that the function equals ``value`` at ``anchor``."""
        return self.shifted(value - self(anchor))

    def __repr__(self) -> str:
        return f"ChartFunction({self.name!r}, {self.chart!r})"


@dataclass(frozen=True)
class ManifoldPoint:
    x: np.ndarray
    y: np.ndarray

    def chart_coords(self, chart: FocalChartSpec) -> np.ndarray:
        mask = chart.intensive_mask
        return np.where(mask, self.y, self.x)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


def manifold_point(f: ChartFunction, z) -> ManifoldPoint:
    """The full ``(x, y)`` point determined by chart coordinates ``z``."""
    z = np.asarray(z, dtype=float)
    g = f.gradient(z)
    mask = f.chart.intensive_mask
    x = np.where(mask, -g, z)
    y = np.where(mask, z, g)
    return ManifoldPoint(x, y)


def newton_solve(
    residual: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    u0: np.ndarray,
    tol: float = NEWTON_TOL,
    max_iter: int = MAX_NEWTON_ITER,
    feasible: Callable[[np.ndarray], bool] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Damped Newton iteration for ``F(u) = 0``.

    ``residual(u)`` returns ``(F, dF/du)``.  Steps are halved until the
    residual norm decreases and the iterate stays feasible; a ``DomainError``
    raised by ``residual`` counts as infeasible.  Returns ``(u, F, dF/du)``.
    """
    u = np.array(u0, dtype=float)
    r, jac = residual(u)
    norm = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if norm <= tol:
            return u, r, jac
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise DegenerateHessian("singular Jacobian in Newton iteration") from exc
        t = 1.0
        accepted = False
        while t >= 2.0**-30:
            trial = u + t * step
            if feasible is None or feasible(trial):
                try:
                    r_new, jac_new = residual(trial)
                except (DomainError, NewtonDivergence, DegenerateHessian):
                    # nested solves failing at a trial point mark it infeasible
                    r_new = None
                if r_new is not None and np.all(np.isfinite(r_new)):
                    norm_new = float(np.linalg.norm(r_new))
                    if norm_new <= (1.0 - 1e-4 * t) * norm or norm_new <= tol:
                        accepted = True
                        break
            t *= 0.5
        if not accepted:
            # Residual already at rounding level: accept the current iterate.
            if norm <= 1e3 * tol:
                return u, r, jac
            raise NewtonDivergence(f"line search failed at residual {norm:.3e}")
        u, r, jac, norm = trial, r_new, jac_new, norm_new
    if norm <= tol:
        return u, r, jac
    raise NewtonDivergence(f"no convergence in {max_iter} iterations (residual {norm:.3e})")


class _LegendreSolution:
    __slots__ = ("z_from", "u", "hess")

    def __init__(self, z_from, u, hess):
        self.z_from = z_from
        self.u = u
        self.hess = hess


class LegendreChartFunction(ChartFunction):
    """Chart function defined pointwise through a stationary-point solve."""

    def __init__(self, source: ChartFunction, to_J: frozenset, guess=None, name: str = ""):
        self.source = source
        target_chart = source.chart.with_focal(to_J)
        I = source.chart.focal_set
        self.transformed = np.array(sorted(k - 1 for k in (I ^ to_J)), dtype=int)
        self.spectators = np.array([k for k in range(source.dim) if k not in set(self.transformed)], dtype=int)
        # +1 where the position turns intensive, -1 where it turns extensive
        self.signs = np.array([1.0 if (k + 1) in to_J else -1.0 for k in self.transformed])
        self._guess = guess
        self._cache: OrderedDict[bytes, _LegendreSolution] = OrderedDict()
        self._last_u: np.ndarray | None = None
        reference = None
        if source.reference is not None:
            try:
                reference = manifold_point(source, source.reference).chart_coords(target_chart)
            except Exception:
                reference = None
        super().__init__(
            target_chart,
            self._value_impl,
            self._gradient_impl,
            self._hessian_impl,
            None,
            name or f"L[{sorted(to_J)}]{source.name}",
            reference,
        )

    def _initial_guess(self, z: np.ndarray) -> np.ndarray:
        if self._guess is not None:
            g = self._guess(z) if callable(self._guess) else self._guess
            return np.asarray(g, dtype=float).reshape(self.transformed.size)
        if self._last_u is not None:
            return self._last_u.copy()
        if self.source.reference is not None:
            return self.source.reference[self.transformed].copy()
        return np.ones(self.transformed.size)

    def _assemble(self, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        zi = z.copy()
        zi[self.transformed] = u
        return zi

    def solve(self, z) -> _LegendreSolution:
        z = np.asarray(z, dtype=float)
        key = z.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        p = z[self.transformed]
        T = self.transformed
        target = self.signs * p
        src = self.source
        box = src.domain

        def residual(u):
            zi = self._assemble(z, u)
            g = src.gradient(zi)
            H = src.hessian(zi)
            return g[T] - target, H[np.ix_(T, T)]

        feasible = None
        if box is not None:
            feasible = lambda u: bool(np.all(u >= box.lo[T]) and np.all(u <= box.hi[T]))
        tol = NEWTON_TOL * max(1.0, float(np.max(np.abs(target))) if target.size else 1.0)
        u, r, jac = newton_solve(residual, self._initial_guess(z), tol=tol, feasible=feasible)
        # One extra full step drives the root to rounding level, so finite
        # differences of the transformed function are not polluted by the
        # solver tolerance.
        try:
            u_pol = u + np.linalg.solve(jac, -r)
            r_pol, _ = residual(u_pol)
            if np.linalg.norm(r_pol) <= np.linalg.norm(r):
                u = u_pol
        except (np.linalg.LinAlgError, DomainError, NewtonDivergence, DegenerateHessian):
            pass
        zi = self._assemble(z, u)
        H = src.hessian(zi)
        Huu = H[np.ix_(T, T)]
        if abs(np.linalg.det(Huu)) <= DET_FLOOR:
            raise DegenerateHessian(f"transformed Hessian block singular at {zi}")
        sol = _LegendreSolution(zi, u, H)
        self._last_u = u
        self._cache[key] = sol
        if len(self._cache) > 256:
            self._cache.popitem(last=False)
        return sol

    def _value_impl(self, z):
        sol = self.solve(z)
        p = z[self.transformed]
        return self.source(sol.z_from) - float(np.sum(self.signs * p * sol.u))

    def _gradient_impl(self, z):
        sol = self.solve(z)
        g_src = self.source.gradient(sol.z_from)
        g = np.empty(self.dim)
        g[self.transformed] = -self.signs * sol.u
        g[self.spectators] = g_src[self.spectators]
        return g

    def _hessian_impl(self, z):
        sol = self.solve(z)
        T, W, s = self.transformed, self.spectators, self.signs
        H = sol.hess
        Huu = H[np.ix_(T, T)]
        Huw = H[np.ix_(T, W)]
        Hww = H[np.ix_(W, W)]
        inv_uu = np.linalg.inv(Huu)
        out = np.empty((self.dim, self.dim))
        out[np.ix_(T, T)] = -(s[:, None] * inv_uu * s[None, :])
        cross = s[:, None] * (inv_uu @ Huw)
        out[np.ix_(T, W)] = cross
        out[np.ix_(W, T)] = cross.T
        out[np.ix_(W, W)] = Hww - Huw.T @ inv_uu @ Huw
        return out


def legendre_transform(f: ChartFunction, from_I: Iterable[int], to_J: Iterable[int], guess=None) -> ChartFunction:
    """Generating function of the same manifold on chart ``to_J``.

    The result evaluates ``S_J = S_I - sum_{J minus I} y x + sum_{I minus J} y x``
    at the stationary point, solved by damped Newton at every call.
    ``guess`` (array or callable of the target coordinates) seeds the solver.
    """
    from_I = frozenset(from_I)
    to_J = frozenset(to_J)
    if from_I != f.chart.focal_set:
        raise ValueError(f"function lives on chart {sorted(f.chart.focal_set)}, not {sorted(from_I)}")
    f.chart.with_focal(to_J)  # validates the target chart
    if from_I == to_J:
        return f
    return LegendreChartFunction(f, to_J, guess=guess)


def check_cocycle_L(f: ChartFunction, I, J, K, samples) -> float:
    """Max deviation of the Legendre loop I -> J -> K -> I from the identity."""
    I, J, K = frozenset(I), frozenset(J), frozenset(K)
    g = legendre_transform(f, I, J)
    h = legendre_transform(g, J, K)
    back = legendre_transform(h, K, I)
    if back is f:
        return 0.0
    worst = 0.0
    for z in np.atleast_2d(np.asarray(samples, dtype=float)):
        worst = max(worst, abs(back(z) - f(z)))
    return worst


def glue_map(f: ChartFunction, from_J: Iterable[int], to_I: Iterable[int], point) -> np.ndarray:
    """Coordinates on chart ``to_I`` of the manifold point given on chart ``from_J``.

    ``f`` may live on any chart; it is first transformed to ``from_J``.
    """
    from_J = frozenset(from_J)
    to_I = frozenset(to_I)
    point = np.asarray(point, dtype=float)
    if from_J == to_I:
        return point.copy()
    fJ = f if f.chart.focal_set == from_J else legendre_transform(f, f.chart.focal_set, from_J)
    return manifold_point(fJ, point).chart_coords(f.chart.with_focal(to_I))


def tau_map(point_xi_eta) -> np.ndarray:
    """Map ``(xi_0..xi_d, eta_0..eta_d)`` to ``(x_1..x_{d+1}, y_1..y_{d+1})``."""
    v = np.asarray(point_xi_eta, dtype=float)
    n = v.size // 2
    xi, eta = v[:n], v[n:]
    x = np.empty(n)
    y = np.empty(n)
    x[: n - 1] = xi[1:]
    y[: n - 1] = eta[1:] - eta[0]
    x[n - 1] = xi[0] + xi[1:].sum()
    y[n - 1] = eta[0]
    return np.concatenate([x, y])


def tau_inverse(point_x_y) -> np.ndarray:
    v = np.asarray(point_x_y, dtype=float)
    n = v.size // 2
    x, y = v[:n], v[n:]
    xi = np.empty(n)
    eta = np.empty(n)
    eta[0] = y[n - 1]
    eta[1:] = y[: n - 1] + eta[0]
    xi[1:] = x[: n - 1]
    xi[0] = x[n - 1] - x[: n - 1].sum()
    return np.concatenate([xi, eta])


def _standard_form(n: int) -> np.ndarray:
    # coordinates ordered (positions, momenta); omega = sum d(momentum) ^ d(position)
    omega = np.zeros((2 * n, 2 * n))
    omega[:n, n:] = -np.eye(n)
    omega[n:, :n] = np.eye(n)
    return omega


def symplectic_residual(mapping: Callable[[np.ndarray], np.ndarray], point, rel: float = 1e-6) -> float:
    """``max |J^T Omega J - Omega|`` for the central-difference Jacobian of ``mapping``."""
    point = np.asarray(point, dtype=float)
    m = point.size
    jac = np.empty((m, m))
    for k in range(m):
        h = rel * max(1.0, abs(point[k]))
        e = np.zeros(m)
        e[k] = h
        jac[:, k] = (mapping(point + e) - mapping(point - e)) / (2 * h)
    omega = _standard_form(m // 2)
    return float(np.max(np.abs(jac.T @ omega @ jac - omega)))


def lagrangian_residual(f: ChartFunction, z, rel: float = 1e-5) -> float:
    """Largest component of the pulled-back form ``sum dy ^ dx`` at ``z``.

    Vanishes for any chart function with symmetric mixed partials.
    """
    z = np.asarray(z, dtype=float)
    n = z.size
    dx = np.empty((n, n))
    dy = np.empty((n, n))
    for a in range(n):
        h = rel * max(1.0, abs(z[a]))
        e = np.zeros(n)
        e[a] = h
        p_plus = manifold_point(f, z + e)
        p_minus = manifold_point(f, z - e)
        dx[:, a] = (p_plus.x - p_minus.x) / (2 * h)
        dy[:, a] = (p_plus.y - p_minus.y) / (2 * h)
    form = dy.T @ dx - dx.T @ dy
    return float(np.max(np.abs(form)))


def homogeneity_residual(f: ChartFunction, samples, rho: float = 2.0) -> float:
    """Max relative deviation of ``S(rho x, y)`` from ``rho S(x, y)``."""
    mask = ~f.chart.intensive_mask
    worst = 0.0
    for z in np.atleast_2d(np.asarray(samples, dtype=float)):
        scaled = np.where(mask, rho * z, z)
        ref = rho * f(z)
        worst = max(worst, abs(f(scaled) - ref) / max(1.0, abs(ref)))
    return worst


def ideal_gas_manifold(
    c_v: float,
    d: int = 2,
    R: float = 1.0,
    s0: float = 0.0,
    domain: Box | None = None,
) -> ChartFunction:
    """Ideal-gas entropy on the all-extensive chart.

    ``d = 2`` gives ``S(E, V, nu) = nu (c_v ln(E/nu) + R ln(V/nu) + s0)``;
    ``d = 1`` drops the volume.  Degree-1 homogeneous in all arguments.
    """
    if not c_v > 0:
        raise ValueError("c_v must be positive")
    if d not in (1, 2):
        raise ValueError("ideal gas supports d = 1 (E, nu) or d = 2 (E, V, nu)")
    c = float(c_v)

    def check(z):
        if np.any(z <= 0):
            raise DomainError(f"extensive coordinates must be positive, got {z}")

    if d == 2:

        def value(z):
            check(z)
            E, V, nu = z
            return nu * (c * np.log(E / nu) + R * np.log(V / nu) + s0)

        def gradient(z):
            check(z)
            E, V, nu = z
            return np.array([c * nu / E, R * nu / V, c * np.log(E / nu) + R * np.log(V / nu) + s0 - c - R])

        def hessian(z):
            check(z)
            E, V, nu = z
            return np.array(
                [
                    [-c * nu / E**2, 0.0, c / E],
                    [0.0, -R * nu / V**2, R / V],
                    [c / E, R / V, -(c + R) / nu],
                ]
            )

        domain = domain or Box([1e-3, 1e-3, 1e-3], [1e3, 1e3, 1e3])
        reference = [c, 1.0, 1.0]
    else:

        def value(z):
            check(z)
            E, nu = z
            return nu * (c * np.log(E / nu) + s0)

        def gradient(z):
            check(z)
            E, nu = z
            return np.array([c * nu / E, c * np.log(E / nu) + s0 - c])

        def hessian(z):
            check(z)
            E, nu = z
            return np.array([[-c * nu / E**2, c / E], [c / E, -c / nu]])

        domain = domain or Box([1e-3, 1e-3], [1e3, 1e3])
        reference = [c, 1.0]

    return ChartFunction(FocalChartSpec(d + 1, ()), value, gradient, hessian, domain, "ideal_gas", reference)


def quadratic_chart(chart: FocalChartSpec, matrix, linear=None, constant: float = 0.0) -> ChartFunction:
    """``S(z) = z^T A z / 2 + b^T z + c`` with analytic derivatives."""
    A = np.asarray(matrix, dtype=float)
    A = 0.5 * (A + A.T)
    b = np.zeros(chart.d_plus_1) if linear is None else np.asarray(linear, dtype=float)
    return ChartFunction(
        chart,
        lambda z: 0.5 * z @ A @ z + b @ z + constant,
        lambda z: A @ z + b,
        lambda z: A.copy(),
        name="quadratic",
        reference=np.zeros(chart.d_plus_1),
    )
