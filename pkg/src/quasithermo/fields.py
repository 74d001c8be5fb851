"""Uniform cell-centred grids and gridded densities shared by the solvers."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = ["Grid", "StateField", "format_float"]


def format_float(x: float) -> str:
    """Round-trip decimal representation used in every CSV export."""
    return "%.17g" % float(x)


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``n[i]`` cells on ``[lo[i], hi[i]]`` per axis.

    Values live at cell centres.  ``periodic`` marks axes whose opposite
    faces are identified (used by the spectral phase-space solver).
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]
    periodic: bool = False

    def __init__(self, lo: Sequence[float], hi: Sequence[float], n: Sequence[int] | int, periodic: bool = False):
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        if isinstance(n, (int, np.integer)):
            n = (int(n),) * len(lo)
        n = tuple(int(v) for v in n)
        if not (len(lo) == len(hi) == len(n)):
            raise ValueError("lo, hi and n must have the same length")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("grid needs lo < hi on every axis")
        if any(v < 1 for v in n):
            raise ValueError("grid needs at least one cell per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "periodic", bool(periodic))

    @property
    def ndim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / m for a, b, m in zip(self.lo, self.hi, self.n)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def centers(self, axis: int) -> np.ndarray:
        h = (self.hi[axis] - self.lo[axis]) / self.n[axis]
        return self.lo[axis] + h * (np.arange(self.n[axis]) + 0.5)

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(self.centers(i) for i in range(self.ndim))

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def points(self) -> np.ndarray:
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def face_mesh(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of the interior faces normal to ``axis``."""
        h = self.spacing[axis]
        faces = self.lo[axis] + h * np.arange(1, self.n[axis])
        axes = list(self.axes)
        axes[axis] = faces
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "n": list(self.n), "periodic": self.periodic}


@dataclass
class StateField:
    """Gridded density on a :class:`Grid`.

    ``mode`` is ``"f"`` for a probability density (unit mass) or ``"F"``
    for the size-scaled density ``F = size_factor * f``.
    """

    grid: Grid
    values: np.ndarray
    mode: str = "f"
    size_factor: float = 1.0
    time: float = 0.0
    labels: tuple[str, ...] = ()
    units: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if self.mode not in ("f", "F"):
            raise ValueError("mode must be 'f' or 'F'")
        if not self.labels:
            self.labels = tuple(f"a{i + 1}" for i in range(self.grid.ndim))
        if not self.units:
            self.units = ("1",) * self.grid.ndim

    def density(self) -> np.ndarray:
        """Values converted to the unit-mass density ``f``."""
        return self.values if self.mode == "f" else self.values / self.size_factor

    def mass(self) -> float:
        return float(np.sum(self.density()) * self.grid.cell_volume)

    def expectation(self, func_values: np.ndarray) -> float:
        f = self.density()
        return float(np.sum(f * func_values) * self.grid.cell_volume / self.mass())

    def mean(self) -> np.ndarray:
        return np.array([self.expectation(m) for m in self.grid.mesh()])

    def covariance(self) -> np.ndarray:
        mesh = self.grid.mesh()
        mu = self.mean()
        d = self.grid.ndim
        cov = np.empty((d, d))
        for i in range(d):
            for j in range(i, d):
                cov[i, j] = cov[j, i] = self.expectation((mesh[i] - mu[i]) * (mesh[j] - mu[j]))
        return cov

    def with_values(self, values: np.ndarray, time: float | None = None) -> "StateField":
        return StateField(
            self.grid,
            np.array(values, dtype=float),
            self.mode,
            self.size_factor,
            self.time if time is None else float(time),
            self.labels,
            self.units,
            dict(self.meta),
        )

    def normalized(self) -> "StateField":
        f = self.density()
        return StateField(self.grid, f / (np.sum(f) * self.grid.cell_volume), "f", 1.0, self.time, self.labels, self.units)

    def to_csv(self, value_unit: str = "1") -> str:
        """One row per cell: coordinates then value, 17 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"{lab} [{u}]" for lab, u in zip(self.labels, self.units)] + [f"{self.mode} [{value_unit}]"])
        pts = self.grid.points()
        vals = self.values.ravel()
        for p, v in zip(pts, vals):
            writer.writerow([format_float(c) for c in p] + [format_float(v)])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "time": self.time,
            "mode": self.mode,
            "size_factor": self.size_factor,
            "labels": list(self.labels),
            "units": list(self.units),
            "mass": self.mass(),
            **self.meta,
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True)
