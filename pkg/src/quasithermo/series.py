"""Truncated power series in the small parameter and their exp/log coefficient maps.

Coefficients follow the exponential (Taylor) convention

    a(xi) = sum_m a_m xi**m / m!

so ``a_m`` is the m-th derivative of ``a`` at zero.  With this convention the
coefficients of ``exp(b)`` and ``log(a)`` are multinomial sums over integer
compositions, which is what :func:`exp_coeffs` and :func:`log_coeffs`
evaluate term by term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import NonPositiveLeadingCoefficient

__all__ = [
    "TruncatedSeries",
    "SeriesField",
    "compositions",
    "exp_coeffs",
    "log_coeffs",
    "series_arith",
]


@lru_cache(maxsize=None)
def compositions(m: int, p: int) -> tuple[tuple[int, ...], ...]:
    """All ordered tuples of ``p`` positive integers summing to ``m``."""
    if p <= 0:
        return ((),) if m == 0 else ()
    if p == 1:
        return ((m,),) if m >= 1 else ()
    out = []
    for first in range(1, m - p + 2):
        for rest in compositions(m - first, p - 1):
            out.append((first,) + rest)
    return tuple(out)


@lru_cache(maxsize=None)
def _multinomial(parts: tuple[int, ...]) -> float:
    m = sum(parts)
    num = math.factorial(m)
    for k in parts:
        num //= math.factorial(k)
    return float(num)


@dataclass(frozen=True)
class TruncatedSeries:
    """Coefficients ``c_0..c_K`` of a series truncated at order ``K``."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Sequence[float] | np.ndarray):
        values = tuple(float(c) for c in np.asarray(coeffs, dtype=float).ravel())
        if not values:
            raise ValueError("a truncated series needs at least one coefficient")
        if not all(math.isfinite(c) for c in values):
            raise ValueError("series coefficients must be finite")
        object.__setattr__(self, "coeffs", values)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, m: int) -> float:
        return self.coeffs[m]

    def __iter__(self) -> Iterator[float]:
        return iter(self.coeffs)

    def as_array(self) -> np.ndarray:
        return np.array(self.coeffs)

    def truncate(self, order: int) -> "TruncatedSeries":
        if order > self.order:
            raise ValueError(f"cannot extend order {self.order} to {order}")
        return TruncatedSeries(self.coeffs[: order + 1])

    def evaluate(self, xi: float) -> float:
        """Sum of the truncated series at ``xi``."""
        return float(sum(c * xi**m / math.factorial(m) for m, c in enumerate(self.coeffs)))

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        return series_arith(self, other, "add")

    def __sub__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        return series_arith(self, series_arith(other, -1.0, "scale"), "add")

    def __mul__(self, other):
        if isinstance(other, TruncatedSeries):
            return series_arith(self, other, "mul")
        return series_arith(self, float(other), "scale")

    __rmul__ = __mul__

    def __neg__(self) -> "TruncatedSeries":
        return series_arith(self, -1.0, "scale")


def exp_coeffs(b: TruncatedSeries) -> TruncatedSeries:
    """Coefficients of ``exp(b(xi))`` from those of ``b``."""
    b = _as_series(b)
    K = b.order
    a0 = math.exp(b[0])
    out = [a0]
    for m in range(1, K + 1):
        total = 0.0
        for p in range(1, m + 1):
            inner = 0.0
            for parts in compositions(m, p):
                term = _multinomial(parts)
                for k in parts:
                    term *= b[k]
                inner += term
            total += inner / math.factorial(p)
        out.append(a0 * total)
    return TruncatedSeries(out)


def log_coeffs(a: TruncatedSeries) -> TruncatedSeries:
    """Coefficients of ``log(a(xi))`` from those of ``a``; requires ``a_0 > 0``."""
    a = _as_series(a)
    a0 = a[0]
    if not a0 > 0.0:
        raise NonPositiveLeadingCoefficient(f"leading coefficient must be positive, got {a0!r}")
    K = a.order
    out = [math.log(a0)]
    for m in range(1, K + 1):
        total = 0.0
        for q in range(1, m + 1):
            # ln(1+u) = sum_q (-1)**(q+1) u**q / q
            sign = 1.0 if q % 2 == 1 else -1.0
            inner = 0.0
            for parts in compositions(m, q):
                term = _multinomial(parts)
                for k in parts:
                    term *= a[k]
                inner += term
            total += sign * inner / (q * a0**q)
        out.append(total)
    return TruncatedSeries(out)


def series_arith(lhs, rhs, op: str) -> TruncatedSeries:
    """Coefficientwise ``add``, Leibniz-rule ``mul`` or scalar ``scale``.

    Binary results are truncated to the smaller operand order.
    """
    lhs = _as_series(lhs)
    if op == "scale":
        s = float(rhs)
        return TruncatedSeries([s * c for c in lhs])
    rhs = _as_series(rhs)
    K = min(lhs.order, rhs.order)
    if op == "add":
        return TruncatedSeries([lhs[m] + rhs[m] for m in range(K + 1)])
    if op == "mul":
        return TruncatedSeries(
            [sum(math.comb(n, k) * lhs[k] * rhs[n - k] for k in range(n + 1)) for n in range(K + 1)]
        )
    raise ValueError(f"unknown series operation {op!r}")


def _as_series(value) -> TruncatedSeries:
    return value if isinstance(value, TruncatedSeries) else TruncatedSeries(value)


@dataclass
class SeriesField:
    """Truncated series attached to every node of a rectangular grid.

    ``axes`` lists the node coordinates along each chart coordinate and
    ``coeffs`` has shape ``(*grid_shape, K + 1)``.
    """

    axes: tuple[np.ndarray, ...]
    coeffs: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.coeffs = np.asarray(self.coeffs)
        shape = tuple(len(a) for a in self.axes)
        if self.coeffs.shape[:-1] != shape:
            raise ValueError(f"coefficient array {self.coeffs.shape} does not match grid {shape}")

    @property
    def order(self) -> int:
        return self.coeffs.shape[-1] - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    def points(self) -> np.ndarray:
        """Grid nodes as an array of shape ``(n_nodes, dim)`` in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def at(self, index: tuple[int, ...]) -> TruncatedSeries:
        return TruncatedSeries(np.real_if_close(self.coeffs[index]))

    def order_slice(self, m: int) -> np.ndarray:
        return self.coeffs[..., m]

    @classmethod
    def tabulate(
        cls,
        axes: Sequence[np.ndarray],
        funcs: Sequence[Callable[[np.ndarray], complex]],
        labels: tuple[str, ...] = (),
    ) -> "SeriesField":
        """Evaluate one callable per order at every grid node."""
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        shape = tuple(len(a) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        values = np.array([[f(p) for f in funcs] for p in pts])
        if np.iscomplexobj(values) and np.all(np.abs(values.imag) <= 1e-14 * (1 + np.abs(values.real))):
            values = values.real
        return cls(axes, values.reshape(shape + (len(funcs),)), labels)
