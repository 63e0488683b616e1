"""Spectral solver on the Neumann cosine eigenbasis of the rectangle.

The zero-flux Laplacian eigenfunctions of a rectangle are the tensor
cosines

    l_{kx,ky}(x, y) = c_kx c_ky cos(kx pi (x - xmin)/Lx) cos(ky pi (y - ymin)/Ly)

with eigenvalues ``(kx pi/Lx)^2 + (ky pi/Ly)^2`` and L2-normalizing
constants ``c_0 = sqrt(1/L)``, ``c_k = sqrt(2/L)``.  Under the grid's
half-cell quadrature the sampled modes are orthonormal to machine
precision (discrete cosine orthogonality), so projection is a pair of
separable matrix products.

Nonlinear terms are evaluated pseudo-spectrally: reconstruct on the grid,
apply the nonlinearity, and project the weak form

    dc_k/dt = -< a_eps(u) grad u - u grad(K*u), grad l_k > + < f_M(u), l_k >

with analytic mode gradients, the spectral expansion for grad u, and
second-order finite differences for grad(K*u).  The grid should carry at
least four nodes per shortest retained wavelength to suppress aliasing.
Coefficient noise uses one scalar Wiener coordinate per retained mode and
an Euler-Maruyama update; this solver cross-checks the finite-difference
stepper deterministically and distributionally, not pathwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .convolution import build_table, convolve_direct_raw, convolve_fft_raw
from .diagnostics import evaluate_row
from .grid import Field, Grid2D, GridMismatchError
from .model import ModelSpec, diffusion_a, noise_sigma, reaction_truncated, validate_or_raise
from .stepper import BlowUpReport, RunConfig


@dataclass(frozen=True)
class SpectralBasis:
    """Retained cosine modes on a grid, sorted by eigenvalue.

    ``modes[k]`` is the (kx, ky) pair of the k-th retained mode; ties in
    the eigenvalue are broken by ascending (kx, ky).  Sampled mode values
    are available through :func:`sample_mode`; internally the basis keeps
    only the separable 1D factor matrices.
    """

    grid: Grid2D
    n_modes: int  # per axis; n_modes**2 modes retained
    modes: tuple[tuple[int, int], ...]
    eigenvalues: np.ndarray
    _bx: np.ndarray
    _by: np.ndarray
    _bxp: np.ndarray
    _byp: np.ndarray
    _order: np.ndarray  # sorted position of axis-pair (ky, kx)

    @property
    def n_total(self) -> int:
        return self.n_modes * self.n_modes

    def _weighted(self, mat: np.ndarray, axis: str) -> np.ndarray:
        return mat * self.grid.cell_weights_1d(axis)[None, :]

    def scatter(self, coeffs: np.ndarray) -> np.ndarray:
        """Sorted coefficient vector -> (ky, kx) coefficient array."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (self.n_total,):
            raise ValueError(f"expected {self.n_total} coefficients, got {coeffs.shape}")
        return coeffs[self._order]

    def gather(self, c2: np.ndarray) -> np.ndarray:
        """(ky, kx) coefficient array -> sorted coefficient vector."""
        out = np.empty(self.n_total)
        out[self._order.ravel()] = c2.ravel()
        return out


def build_basis(grid: Grid2D, n_modes: int) -> SpectralBasis:
    """Construct the first ``n_modes`` cosine modes per axis.

    Raises ValueError when the grid resolves the highest retained
    wavelength with fewer than four nodes.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    kmax = n_modes - 1
    if kmax > 0 and (grid.nx - 1 < 2 * kmax or grid.ny - 1 < 2 * kmax):
        raise ValueError(
            f"grid {grid.nx}x{grid.ny} has fewer than 4 nodes per wavelength of "
            f"mode {kmax}; need at least {2 * kmax + 1} nodes per axis"
        )
    lx = grid.xmax - grid.xmin
    ly = grid.ymax - grid.ymin
    ks = np.arange(n_modes)
    cx = np.where(ks == 0, np.sqrt(1.0 / lx), np.sqrt(2.0 / lx))
    cy = np.where(ks == 0, np.sqrt(1.0 / ly), np.sqrt(2.0 / ly))
    phase_x = ks[:, None] * np.pi * (grid.x[None, :] - grid.xmin) / lx
    phase_y = ks[:, None] * np.pi * (grid.y[None, :] - grid.ymin) / ly
    bx = cx[:, None] * np.cos(phase_x)
    by = cy[:, None] * np.cos(phase_y)
    bxp = -cx[:, None] * (ks[:, None] * np.pi / lx) * np.sin(phase_x)
    byp = -cy[:, None] * (ks[:, None] * np.pi / ly) * np.sin(phase_y)

    pairs = [(kx, ky) for ky in range(n_modes) for kx in range(n_modes)]
    lam = {(kx, ky): (kx * np.pi / lx) ** 2 + (ky * np.pi / ly) ** 2 for kx, ky in pairs}
    ordered = sorted(pairs, key=lambda p: (lam[p], p[0], p[1]))
    order = np.empty((n_modes, n_modes), dtype=np.int64)
    for pos, (kx, ky) in enumerate(ordered):
        order[ky, kx] = pos
    return SpectralBasis(
        grid=grid, n_modes=n_modes, modes=tuple(ordered),
        eigenvalues=np.array([lam[p] for p in ordered]),
        _bx=bx, _by=by, _bxp=bxp, _byp=byp, _order=order,
    )


def sample_mode(basis: SpectralBasis, index: int) -> Field:
    """The index-th retained mode sampled on the grid."""
    kx, ky = basis.modes[index]
    return Field(basis.grid, np.outer(basis._by[ky], basis._bx[kx]))


def project(f: Field, basis: SpectralBasis) -> np.ndarray:
    """Coefficients of the field against the retained modes (sorted order)."""
    if f.grid != basis.grid:
        raise GridMismatchError(f"field grid {f.grid} != basis grid {basis.grid}")
    return basis.gather(_project_raw(f.values, basis))


def _project_raw(vals: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    byw = basis._weighted(basis._by, "y")
    bxw = basis._weighted(basis._bx, "x")
    return byw @ vals @ bxw.T


def reconstruct(coeffs: np.ndarray, basis: SpectralBasis) -> Field:
    """Field represented by a sorted coefficient vector."""
    c2 = basis.scatter(np.asarray(coeffs, dtype=np.float64))
    return Field(basis.grid, basis._by.T @ c2 @ basis._bx)


@dataclass(frozen=True)
class GalerkinState:
    coeffs: np.ndarray  # sorted mode order
    epsilon: float
    t: float


def default_epsilon(spec: ModelSpec, n_modes: int) -> float:
    """Regularization 1/n for n retained modes; none for constant diffusion."""
    if spec.diffusion_kind == "constant":
        return 0.0
    return 1.0 / float(n_modes * n_modes)


def initial_state(u0: Field, basis: SpectralBasis, spec: ModelSpec,
                  epsilon: Optional[float] = None) -> GalerkinState:
    if epsilon is None:
        epsilon = default_epsilon(spec, basis.n_modes)
    return GalerkinState(coeffs=project(u0, basis), epsilon=epsilon, t=0.0)


def _make_conv(basis: SpectralBasis, spec: ModelSpec, backend: str):
    if spec.kernel_kind == "disabled":
        return None
    table = build_table(basis.grid, spec)
    raw = convolve_fft_raw if backend == "fft" else convolve_direct_raw
    return lambda arr: raw(arr, table)


def _drift2(c2: np.ndarray, eps: float, basis: SpectralBasis, spec: ModelSpec, conv):
    """Weak-form drift in (ky, kx) layout; also returns the reconstruction."""
    g = basis.grid
    bx, by, bxp, byp = basis._bx, basis._by, basis._bxp, basis._byp
    u = by.T @ c2 @ bx
    ux = by.T @ c2 @ bxp
    uy = byp.T @ c2 @ bx
    a_eps = diffusion_a(u, spec) + eps
    wx = a_eps * ux
    wy = a_eps * uy
    if conv is not None:
        v = conv(u)
        vy, vx = np.gradient(v, g.dy, g.dx, edge_order=2)
        wx -= u * vx
        wy -= u * vy
    bxw = basis._weighted(bx, "x")
    byw = basis._weighted(by, "y")
    bxpw = basis._weighted(bxp, "x")
    bypw = basis._weighted(byp, "y")
    drift = -(byw @ wx @ bxpw.T) - (bypw @ wy @ bxw.T) + byw @ reaction_truncated(u, spec) @ bxw.T
    return drift, u


@dataclass(frozen=True)
class GalerkinRhs:
    drift: np.ndarray  # time derivative of the sorted coefficient vector
    noise: Optional[np.ndarray]  # (n_total, n_total): column l multiplies dW_l


def galerkin_rhs(state: GalerkinState, basis: SpectralBasis, spec: ModelSpec,
                 conv_backend: str = "fft") -> GalerkinRhs:
    """Drift and noise coefficients of the projected system at one state.

    The noise matrix entry (k, l) is the inner product of sigma(u) times
    mode l against mode k (the truncated noise projection); it is built
    column by column, so request it only for small bases.
    """
    conv = _make_conv(basis, spec, conv_backend)
    c2 = basis.scatter(state.coeffs)
    drift2, u = _drift2(c2, state.epsilon, basis, spec, conv)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite reconstruction in galerkin_rhs")
    noise = None
    if spec.noise_kind != "zero":
        s = noise_sigma(u, spec)
        noise = np.empty((basis.n_total, basis.n_total))
        for l in range(basis.n_total):
            kx, ky = basis.modes[l]
            mode = np.outer(basis._by[ky], basis._bx[kx])
            noise[:, l] = basis.gather(_project_raw(s * mode, basis))
    return GalerkinRhs(drift=basis.gather(drift2), noise=noise)


def galerkin_step(state: GalerkinState, basis: SpectralBasis, spec: ModelSpec,
                  config: RunConfig, dW: Optional[np.ndarray] = None,
                  conv=None) -> GalerkinState:
    """One Euler-Maruyama step of the projected coefficient system.

    ``dW`` holds one N(0, dt) increment per retained mode (sorted order).
    The noise increment is projected as sigma(u) times the reconstructed
    increment field, which equals applying the full noise matrix by
    linearity of the projection.
    """
    if conv is None:
        conv = _make_conv(basis, spec, config.conv_backend)
    c2 = basis.scatter(state.coeffs)
    drift2, u = _drift2(c2, state.epsilon, basis, spec, conv)
    new_c2 = c2 + config.dt * drift2
    if dW is not None and spec.noise_kind != "zero":
        eta = basis._by.T @ basis.scatter(dW) @ basis._bx
        new_c2 += _project_raw(noise_sigma(u, spec) * eta, basis)
    return GalerkinState(coeffs=basis.gather(new_c2), epsilon=state.epsilon,
                         t=state.t + config.dt)


@dataclass
class GalerkinResult:
    states: list[GalerkinState]  # at record times reached
    record_fields: list[Field]
    rows: list
    blow_up: Optional[BlowUpReport]


def run_galerkin(state0: GalerkinState, basis: SpectralBasis, spec: ModelSpec,
                 config: RunConfig, stream=None, sinks: Sequence = ()) -> GalerkinResult:
    """Integrate the projected system and record reconstructed snapshots.

    Same record/sink protocol as the path driver; blow-up aborts and
    returns the partial trajectory with a report.
    """
    validate_or_raise(spec, basis.grid)
    conv = _make_conv(basis, spec, config.conv_backend)
    noisy = spec.noise_kind != "zero" and stream is not None
    record_at = set(config.record_steps())
    states: list[GalerkinState] = []
    fields: list[Field] = []
    rows: list = []

    def record(st: GalerkinState) -> None:
        f = reconstruct(st.coeffs, basis)
        row = evaluate_row(f, spec, nu=config.nu, t=st.t)
        states.append(st)
        fields.append(f)
        rows.append(row)
        for sink in sinks:
            sink.on_record(st.t, f, row)

    state = state0
    if 0 in record_at:
        record(state)
    for k in range(1, config.n_steps + 1):
        dw = None
        if noisy:
            dw = np.sqrt(config.dt) * stream.standard_normals(basis.n_total)
        state = galerkin_step(state, basis, spec, config, dW=dw, conv=conv)
        if not np.all(np.isfinite(state.coeffs)):
            bad = int(np.argwhere(~np.isfinite(state.coeffs))[0][0])
            report = BlowUpReport(step=k, t=k * config.dt, node=(bad, -1),
                                  message=f"non-finite coefficient for mode "
                                          f"{basis.modes[bad]} at step {k}")
            return GalerkinResult(states=states, record_fields=fields, rows=rows,
                                  blow_up=report)
        if k in record_at:
            record(state)
    return GalerkinResult(states=states, record_fields=fields, rows=rows, blow_up=None)
