"""Cumulants from chart generating functions and from gridded densities.

Two routes:

* :func:`cumulants_from_chart` differentiates ``lam * S / k_B`` with the
  factor ``-k_B d/dy`` per intensive direction and ``(k_B / lam) d/dx`` per
  extensive direction.
* :func:`cumulants_from_density` differentiates the log of the
  characteristic function ``int exp(i b.a / k_B) f(a) da`` at ``b = 0``.

:func:`moments_to_cumulants` and :func:`cumulants_to_moments` convert
between raw moments and cumulants for arbitrary dimension.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import NonNormalizedDensity, StepUnderflow
from .fields import StateField, format_float
from .manifold import FocalChartSpec

__all__ = [
    "HBAR_PHYS",
    "KB_PHYS",
    "ScaleParams",
    "CumulantTable",
    "multi_indices",
    "cumulants_from_chart",
    "cumulants_from_density",
    "moments_to_cumulants",
    "cumulants_to_moments",
    "density_moments",
    "ideal_gas_log_partition",
    "ideal_gas_log_states",
    "scaling_exponent",
]

HBAR_PHYS = 6.6262e-27  # erg s
KB_PHYS = 1.3807e-16  # erg / K

# 4th-order central stencils: multiplicity -> (offsets, weights); divide by h**m
_STENCILS = {
    1: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
    2: ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
    3: ((-3, -2, -1, 1, 2, 3), (1 / 8, -1, 13 / 8, -13 / 8, 1, -1 / 8)),
    4: ((-3, -2, -1, 0, 1, 2, 3), (-1 / 6, 2, -13 / 2, 28 / 3, -13 / 2, 2, -1 / 6)),
}

# 5-point stencils (orders 1-2 fourth-order, orders 3-4 second-order)
_FIVE_POINT = {
    0: (0.0, 0.0, 1.0, 0.0, 0.0),
    1: (1 / 12, -8 / 12, 0.0, 8 / 12, -1 / 12),
    2: (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12),
    3: (-1 / 2, 1.0, 0.0, -1.0, 1 / 2),
    4: (1.0, -4.0, 6.0, -4.0, 1.0),
}


@dataclass(frozen=True)
class ScaleParams:
    """Rescaling parameter ``lam`` and the Boltzmann-constant stand-in ``k_B``."""

    lam: float = 1.0
    k_B: float = 1.0

    def __post_init__(self):
        if not (self.lam > 0 and self.k_B > 0):
            raise ValueError("lam and k_B must be positive")

    @property
    def hbar_phys(self) -> float:
        return HBAR_PHYS

    @property
    def k_B_phys(self) -> float:
        return KB_PHYS


def multi_indices(dim: int, max_order: int, min_order: int = 1) -> list[tuple[int, ...]]:
    """All multi-indices with ``min_order <= |M| <= max_order``, graded then lexicographic."""
    out = []
    for total in range(min_order, max_order + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            M = [0] * dim
            for k in combo:
                M[k] += 1
            out.append(tuple(M))
    seen = set()
    uniq = []
    for M in out:
        if M not in seen:
            seen.add(M)
            uniq.append(M)
    return uniq


@dataclass
class CumulantTable:
    entries: dict
    max_order: int
    labels: tuple[str, ...] = ()
    schwarz_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def __getitem__(self, M) -> float:
        return self.entries[tuple(M)]

    def __contains__(self, M) -> bool:
        return tuple(M) in self.entries

    def keys(self):
        return self.entries.keys()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = len(next(iter(self.entries))) if self.entries else 0
        labels = self.labels or tuple(f"m{i + 1}" for i in range(dim))
        w.writerow(list(labels) + ["value"])
        for M in sorted(self.entries, key=lambda m: (sum(m), tuple(-v for v in m))):
            w.writerow([str(v) for v in M] + [format_float(self.entries[M])])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "max_order": self.max_order,
                "labels": list(self.labels),
                "schwarz_residual": self.schwarz_residual,
                "entries": [{"index": list(M), "value": float(v)} for M, v in self.entries.items()],
                **self.meta,
            },
            indent=2,
            sort_keys=True,
        )


def _nested_derivative(
    fn: Callable[[np.ndarray], float],
    z: np.ndarray,
    plan: Sequence[tuple[int, int]],
    h: np.ndarray,
) -> float:
    """Apply per-direction stencils in the order given by ``plan`` ((direction, multiplicity) pairs)."""
    if not plan:
        return float(fn(z))
    (k, m), rest = plan[0], plan[1:]
    offsets, weights = _STENCILS[m]
    total = 0.0
    for off, w in zip(offsets, weights):
        if w == 0.0:
            continue
        zz = z.copy()
        zz[k] += off * h[k]
        total += w * _nested_derivative(fn, zz, rest, h)
    return total / h[k] ** m


def cumulants_from_chart(
    S_lambda: Callable[[np.ndarray, float], float],
    chart: FocalChartSpec,
    point,
    max_order: int,
    scale: ScaleParams,
    indices: Iterable[Sequence[int]] | None = None,
    rel_step: float = 1e-3,
) -> CumulantTable:
    """Cumulant table at ``point`` from a size-dependent chart function.

    ``S_lambda(z, lam)`` is the entropy-level generating function; the
    recipe acts on ``lam * S_lambda / k_B``.  Steps are ``rel_step`` times
    the coordinate magnitude (1 for coordinates at zero).
    """
    if not 1 <= max_order <= 4:
        raise ValueError("max_order must be between 1 and 4")
    z0 = np.asarray(point, dtype=float)
    dim = z0.size
    if dim != chart.d_plus_1:
        raise ValueError("point dimension does not match the chart")
    lam, kB = scale.lam, scale.k_B
    scale_z = np.where(np.abs(z0) > 0, np.abs(z0), 1.0)
    h = rel_step * scale_z
    if np.any(h <= 64 * np.finfo(float).eps * scale_z) or np.any(z0 + h == z0):
        raise StepUnderflow(f"finite-difference step {h} below the resolution of {z0}")
    fn = lambda z: lam * S_lambda(z, lam) / kB
    intensive = chart.intensive_mask
    if indices is None:
        index_list = multi_indices(dim, max_order)
    else:
        index_list = [tuple(int(v) for v in M) for M in indices]
    entries = {}
    swapped = {}
    schwarz = 0.0
    for M in index_list:
        if len(M) != dim:
            raise ValueError(f"multi-index {M} has wrong length")
        if sum(M) == 0:
            raise ValueError("the zero multi-index has no cumulant")
        if sum(M) > max_order:
            raise ValueError(f"multi-index {M} exceeds max_order")
        plan = [(k, m) for k, m in enumerate(M) if m > 0]
        factor = 1.0
        for k, m in plan:
            factor *= (-kB) ** m if intensive[k] else (kB / lam) ** m
        value = factor * _nested_derivative(fn, z0, plan, h)
        if len(plan) > 1:
            swapped[M] = factor * _nested_derivative(fn, z0, plan[::-1], h)
        entries[M] = value
    # relative to the largest entry of the same order, so vanishing mixed
    # entries do not inflate the measure
    for M, other in swapped.items():
        typical = max(abs(v) for K, v in entries.items() if sum(K) == sum(M))
        schwarz = max(schwarz, abs(other - entries[M]) / max(typical, 1e-300))
    return CumulantTable(
        entries,
        max_order,
        tuple(chart.labels()),
        schwarz,
        {"lam": lam, "k_B": kB, "point": z0.tolist()},
    )


def density_moments(field_: StateField, max_order: int, center: np.ndarray | None = None) -> dict:
    """Raw moments ``E[prod a_i**m_i]`` (optionally about ``center``) by cell quadrature."""
    f = field_.density()
    dv = field_.grid.cell_volume
    mass = float(np.sum(f) * dv)
    mesh = field_.grid.mesh()
    if center is not None:
        mesh = tuple(m - c for m, c in zip(mesh, center))
    out = {}
    for M in multi_indices(field_.grid.ndim, max_order):
        prod = np.ones_like(f)
        for k, m in enumerate(M):
            if m:
                prod = prod * mesh[k] ** m
        out[M] = float(np.sum(prod * f) * dv / mass)
    return out


def cumulants_from_density(
    field_: StateField,
    max_order: int,
    scale: ScaleParams | None = None,
    normalized: bool = True,
    rel_step: float = 1e-2,
) -> CumulantTable:
    """Cumulants of a gridded density via its log-characteristic function.

    The mean is taken by direct quadrature and the density is centred before
    differentiating, so order 1 equals the quadrature mean.  ``rel_step``
    sets the ``b``-grid spacing as a fraction of ``k_B / std``.
    """
    if not 1 <= max_order <= 4:
        raise ValueError("max_order must be between 1 and 4")
    scale = scale or ScaleParams()
    kB = scale.k_B
    f = field_.density()
    dv = field_.grid.cell_volume
    mass = float(np.sum(f) * dv)
    if normalized and abs(mass - 1.0) > 1e-6:
        raise NonNormalizedDensity(f"density integrates to {mass!r}")
    weights = (f * dv / mass).ravel()
    pts = field_.grid.points()
    mean = weights @ pts
    centred = pts - mean
    std = np.sqrt(np.maximum(weights @ centred**2, 0.0))
    std = np.where(std > 0, std, np.max(field_.grid.spacing))
    hb = rel_step * kB / std
    dim = field_.grid.ndim

    cache: dict[tuple[int, ...], complex] = {}

    def logchar(offsets: tuple[int, ...]) -> complex:
        hit = cache.get(offsets)
        if hit is None:
            b = np.array(offsets) * hb
            hit = complex(np.log(np.sum(weights * np.exp(1j * (centred @ b) / kB))))
            cache[offsets] = hit
        return hit

    entries = {}
    for M in multi_indices(dim, max_order):
        if sum(M) == 1:
            entries[M] = float(mean[M.index(1)])
            continue
        total = 0.0 + 0.0j
        ranges = [range(-2, 3) if m else (0,) for m in M]
        for offs in itertools.product(*ranges):
            w = 1.0
            for k, (m, o) in enumerate(zip(M, offs)):
                if m:
                    w *= _FIVE_POINT[m][o + 2] / hb[k] ** m
            if w != 0.0:
                total += w * logchar(tuple(offs))
        value = (-1j * kB) ** sum(M) * total
        entries[M] = float(value.real)
    return CumulantTable(entries, max_order, tuple(field_.labels), 0.0, {"k_B": kB, "mass": mass})


def _binom_multi(R: tuple[int, ...], K: tuple[int, ...]) -> int:
    out = 1
    for r, k in zip(R, K):
        out *= math.comb(r, k)
    return out


def _sub_indices(R: tuple[int, ...]):
    return itertools.product(*(range(r + 1) for r in R))


def moments_to_cumulants(moments: Mapping) -> CumulantTable:
    """Convert raw moments (multi-index -> value) to cumulants of the same indices."""
    mom = {tuple(k): float(v) for k, v in moments.items()}
    if not mom:
        return CumulantTable({}, 0)
    dim = len(next(iter(mom)))
    zero = (0,) * dim
    mom.setdefault(zero, 1.0)
    kap: dict[tuple[int, ...], float] = {}
    for M in sorted((m for m in mom if sum(m) > 0), key=sum):
        kap[M] = _cumulant_from(M, mom, kap)
    return CumulantTable(kap, max(sum(m) for m in kap))


def _cumulant_from(M, mom, kap) -> float:
    j = next(i for i, m in enumerate(M) if m)
    R = list(M)
    R[j] -= 1
    R = tuple(R)
    total = mom[M]
    for K in _sub_indices(R):
        if K == R:
            continue
        Kj = list(K)
        Kj[j] += 1
        rest = tuple(r - k for r, k in zip(R, K))
        total -= _binom_multi(R, K) * kap[tuple(Kj)] * mom[rest]
    return total


def cumulants_to_moments(cumulants: Mapping) -> dict:
    """Inverse of :func:`moments_to_cumulants`."""
    kap = {tuple(k): float(v) for k, v in (cumulants.entries if isinstance(cumulants, CumulantTable) else cumulants).items()}
    if not kap:
        return {}
    dim = len(next(iter(kap)))
    mom: dict[tuple[int, ...], float] = {(0,) * dim: 1.0}
    for M in sorted(kap, key=sum):
        j = next(i for i, m in enumerate(M) if m)
        R = list(M)
        R[j] -= 1
        R = tuple(R)
        total = 0.0
        for K in _sub_indices(R):
            Kj = list(K)
            Kj[j] += 1
            rest = tuple(r - k for r, k in zip(R, K))
            total += _binom_multi(R, K) * kap[tuple(Kj)] * mom[rest]
        mom[M] = total
    del mom[(0,) * dim]
    return mom


def ideal_gas_log_partition(beta: float, V: float, nu: float, lam: float, c_v: float, R: float = 1.0, k_B: float = 1.0) -> float:
    """``ln Z`` of ``N = lam nu R / k_B`` classical particles with ``2 c_v / R`` quadratic modes each.

    Scaled so that ``-k_B d(ln Z)/d beta = lam c_v nu / beta``.
    """
    from scipy.special import gammaln

    N = lam * nu * R / k_B
    f = 2.0 * c_v / R
    return N * math.log(lam * V) + 0.5 * f * N * math.log(2 * math.pi / beta) - gammaln(N + 1.0)


def ideal_gas_log_states(E: float, V: float, nu: float, lam: float, c_v: float, R: float = 1.0, k_B: float = 1.0) -> float:
    """``ln`` of the density of states whose Laplace transform is :func:`ideal_gas_log_partition`."""
    from scipy.special import gammaln

    N = lam * nu * R / k_B
    f = 2.0 * c_v / R
    half = 0.5 * f * N
    return (
        N * math.log(lam * V)
        - gammaln(N + 1.0)
        + half * math.log(2 * math.pi)
        + (half - 1.0) * math.log(lam * E)
        - gammaln(half)
    )


def scaling_exponent(lams: Sequence[float], values: Sequence[float]) -> float:
    """Slope of ``log|value|`` against ``log lam``."""
    x = np.log(np.asarray(lams, dtype=float))
    y = np.log(np.abs(np.asarray(values, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])
