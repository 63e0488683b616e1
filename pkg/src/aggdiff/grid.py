"""Uniform rectangular mesh, nodal fields, and discrete integrals/norms.

Nodes live at ``x_i = xmin + i*dx`` (``i = 0..nx-1``) including both domain
endpoints, so ``dx = (xmax - xmin)/(nx - 1)``.  Field values are stored
j-major with i contiguous: ``values[j, i]`` is the value at node
``(x_i, y_j)`` and the flattened order is ``j*nx + i``.  This layout is the
one serialized by the snapshot format and must not change.

Quadrature: every node owns a rectangular cell of the mesh; interior nodes
own a full ``dx*dy`` cell while boundary nodes own half cells (quarter cells
at corners).  Integrals and norms use these cell areas as weights, which is
what makes the divergence of a zero-boundary-flux field sum to exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class GridMismatchError(ValueError):
    """Two objects built on different grids were combined."""


@dataclass(frozen=True)
class Grid2D:
    """Uniform node-centered mesh on ``[xmin, xmax] x [ymin, ymax]``.

    ``nx``/``ny`` are node counts per axis, not cell counts.
    """

    nx: int
    ny: int
    xmin: float = -4.0
    xmax: float = 4.0
    ymin: float = -4.0
    ymax: float = 4.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need at least 3 nodes per axis, got {self.nx}x{self.ny}")
        bounds = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(np.isfinite(b) for b in bounds):
            raise ValueError(f"grid bounds must be finite, got {bounds}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"grid bounds must be ordered, got {bounds}")

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape of a field on this grid: (ny, nx)."""
        return (self.ny, self.nx)

    @property
    def x(self) -> np.ndarray:
        return self.xmin + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.ymin + self.dy * np.arange(self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """X, Y coordinate arrays of shape (ny, nx)."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    def cell_weights_1d(self, axis: str) -> np.ndarray:
        """Per-node cell extents along one axis (half cells at the ends)."""
        if axis == "x":
            w = np.full(self.nx, self.dx)
        elif axis == "y":
            w = np.full(self.ny, self.dy)
        else:
            raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @property
    def cell_areas(self) -> np.ndarray:
        """Per-node cell areas, shape (ny, nx)."""
        return np.outer(self.cell_weights_1d("y"), self.cell_weights_1d("x"))

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)


def node_coords(grid: Grid2D, i: int, j: int) -> tuple[float, float]:
    """Coordinates of node (i, j); raises IndexError outside the grid."""
    if not (0 <= i < grid.nx and 0 <= j < grid.ny):
        raise IndexError(f"node ({i}, {j}) outside grid {grid.nx}x{grid.ny}")
    return (grid.xmin + i * grid.dx, grid.ymin + j * grid.dy)


@dataclass(frozen=True)
class Field:
    """One scalar value per grid node.

    The value array is copied on construction, coerced to float64 C-order,
    and frozen (read-only); treat fields as immutable snapshots.  Non-finite
    values are rejected on ingest.
    """

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if vals.shape != self.grid.shape:
            raise ValueError(
                f"field shape {vals.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise ValueError(f"non-finite field value at node (j={bad[0]}, i={bad[1]})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def full(cls, grid: Grid2D, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    def mutable_copy(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64, order="C", copy=True)


def same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")


def midpoint_avg(f: Field, axis: str, i: int, j: int) -> float:
    """Arithmetic mean at the half-index face (i+1/2, j) or (i, j+1/2)."""
    u = f.values
    if axis == "x":
        if not (0 <= i < f.grid.nx - 1 and 0 <= j < f.grid.ny):
            raise IndexError(f"x half-index ({i}+1/2, {j}) out of range")
        return 0.5 * (u[j, i] + u[j, i + 1])
    if axis == "y":
        if not (0 <= i < f.grid.nx and 0 <= j < f.grid.ny - 1):
            raise IndexError(f"y half-index ({i}, {j}+1/2) out of range")
        return 0.5 * (u[j, i] + u[j + 1, i])
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def integrate(f: Field) -> float:
    """Discrete integral over the domain with per-node cell-area weights."""
    return float(np.sum(f.grid.cell_areas * f.values))


class Norms(NamedTuple):
    l1: float
    l2: float
    linf: float
    min: float


def norms(f: Field) -> Norms:
    """Discrete L1/L2/Linf norms (cell-area weighted) and the raw nodal min."""
    w = f.grid.cell_areas
    u = f.values
    return Norms(
        l1=float(np.sum(w * np.abs(u))),
        l2=float(np.sqrt(np.sum(w * u * u))),
        linf=float(np.max(np.abs(u))),
        min=float(np.min(u)),
    )
