"""Nonlocal interaction term v = K * u on the grid.

The discrete convolution is the free-space double sum

    v[j, i] = dx*dy * sum_{q, p} K((i-p)*dx, (j-q)*dy) * u[q, p]

truncated to the domain, with kernel samples precomputed at every offset
(-(nx-1)..nx-1) x (-(ny-1)..ny-1).  Two evaluation routes exist: exact
direct summation (the oracle, O((nx*ny)^2)) and a zero-padded linear FFT
convolution that must agree with it to 1e-10.  Zero padding matters: the
sum is non-periodic, so any wrap-around is a correctness bug.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sfft

from .grid import Field, Grid2D, GridMismatchError
from .model import ModelSpec, kernel_value


@dataclass
class KernelTable:
    """Kernel samples at every node-offset of a grid.

    ``values[s + ny - 1, r + nx - 1] = K(r*dx, s*dy)`` for offsets
    ``r in [-(nx-1), nx-1]``, ``s in [-(ny-1), ny-1]``.
    """

    grid: Grid2D
    values: np.ndarray
    _fft: dict = field(default_factory=dict, repr=False)

    @property
    def padded_shape(self) -> tuple[int, int]:
        # A circular convolution of period >= 2n-1 per axis leaves the output
        # window [n-1, 2n-2] free of wrap-around (the aliased copies of the
        # length-(3n-2) linear result land entirely outside it).
        return (sfft.next_fast_len(2 * self.grid.ny - 1, real=True),
                sfft.next_fast_len(2 * self.grid.nx - 1, real=True))

    def kernel_fft(self) -> np.ndarray:
        shape = self.padded_shape
        if shape not in self._fft:
            self._fft[shape] = sfft.rfft2(self.values, s=shape)
        return self._fft[shape]


def build_table(grid: Grid2D, spec: ModelSpec) -> KernelTable:
    """Sample the kernel at every grid offset.

    The default normalizer is the exact plane integral; with
    ``kernel_normalizer="discrete_sum"`` the table is instead scaled so its
    own dx*dy Riemann sum is one (useful for mass-leakage studies).  An
    optional cutoff radius zeroes entries beyond it.
    """
    rx = grid.dx * np.arange(-(grid.nx - 1), grid.nx)
    sy = grid.dy * np.arange(-(grid.ny - 1), grid.ny)
    ox, oy = np.meshgrid(rx, sy, indexing="xy")
    vals = kernel_value(ox, oy)
    if spec.kernel_cutoff is not None:
        vals = np.where(ox * ox + oy * oy <= spec.kernel_cutoff**2, vals, 0.0)
    if spec.kernel_normalizer == "discrete_sum":
        vals = vals / (np.sum(vals) * grid.dx * grid.dy)
    elif spec.kernel_normalizer != "analytic":
        raise ValueError(f"unknown kernel_normalizer {spec.kernel_normalizer!r}")
    return KernelTable(grid=grid, values=vals)


def _check(u: Field, table: KernelTable) -> None:
    if u.grid != table.grid:
        raise GridMismatchError(f"field grid {u.grid} != table grid {table.grid}")


def convolve_direct(u: Field, table: KernelTable) -> Field:
    """Exact direct summation of the discrete convolution."""
    _check(u, table)
    return Field(u.grid, convolve_direct_raw(u.values, table))


def convolve_direct_raw(u: np.ndarray, table: KernelTable) -> np.ndarray:
    g = table.grid
    # v[j,i] = sum_{m,l} ktab[j+m, i+l] * u[ny-1-m, nx-1-l]; the windows are
    # views, so no table copy is made.
    windows = sliding_window_view(table.values, (g.ny, g.nx))
    uflip = u[::-1, ::-1]
    v = np.einsum("jiml,ml->ji", windows, uflip, optimize=True)
    return v * (g.dx * g.dy)


def convolve_fft(u: Field, table: KernelTable) -> Field:
    """Zero-padded linear FFT convolution; agrees with the direct sum to 1e-10."""
    _check(u, table)
    return Field(u.grid, convolve_fft_raw(u.values, table))


def convolve_fft_raw(u: np.ndarray, table: KernelTable) -> np.ndarray:
    g = table.grid
    shape = table.padded_shape
    uf = sfft.rfft2(u, s=shape)
    full = sfft.irfft2(uf * table.kernel_fft(), s=shape)
    v = full[g.ny - 1 : 2 * g.ny - 1, g.nx - 1 : 2 * g.nx - 1]
    return v * (g.dx * g.dy)


def make_convolver(grid: Grid2D, spec: ModelSpec, backend: str):
    """Raw-array convolution callable for the stepper, or None if disabled.

    The fft variant keeps a persistent zero-padded input buffer (only the
    field block is rewritten per call), so the callable is owned by one
    path at a time; results are bitwise identical to :func:`convolve_fft`.
    """
    if spec.kernel_kind == "disabled":
        return None
    table = build_table(grid, spec)
    if backend == "fft":
        shape = table.padded_shape
        kf = table.kernel_fft()
        buf = np.zeros(shape)
        ny, nx = grid.ny, grid.nx
        scale = grid.dx * grid.dy

        def conv(u: np.ndarray) -> np.ndarray:
            buf[:ny, :nx] = u
            uf = sfft.rfft2(buf)
            np.multiply(uf, kf, out=uf)
            full = sfft.irfft2(uf, s=shape)
            return full[ny - 1 : 2 * ny - 1, nx - 1 : 2 * nx - 1] * scale

        return conv
    if backend == "direct":
        return lambda u: convolve_direct_raw(u, table)
    raise ValueError(f"unknown convolution backend {backend!r}")
