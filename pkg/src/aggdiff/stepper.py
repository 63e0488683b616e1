"""Fully discrete scheme: conservative fluxes, discrete divergence, extended
Milstein time stepping, and the single-path driver.

Space: node-centered conservative finite differences.  The flux through the
x-face between nodes i and i+1 of row j is

    Fx[j, i] = a_mid * (u[j,i+1] - u[j,i])/dx - u_mid * (v[j,i+1] - v[j,i])/dx

with arithmetic midpoint averages for both ``a`` and ``u``, and the
boundary faces carry identically zero flux (no-flux boundary).  The
divergence divides each net face flux by the width of the cell owned by the
node: ``dx`` for interior nodes, ``dx/2`` for boundary nodes (which own half
cells).  Together with the half-cell quadrature in :mod:`aggdiff.grid` this
makes the total divergence telescope to exactly zero and keeps the scheme
second-order accurate up to the boundary.

Time: explicit update

    u_new = u + dt*(div + f_M(u)) + sigma(u)*dW + 0.5*sigma(u)*sigma'(u)*(dW^2 - dt)

with the convolution, fluxes, reaction and noise coefficients all evaluated
at the current state (one convolution per step).  Increments dW are N(0, dt)
per node; the optional ``white_noise_scaling`` flag multiplies them by
``1/sqrt(dx*dy)`` for experiments with grid-refined noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .convolution import build_table, convolve_direct_raw, convolve_fft_raw, make_convolver
from .diagnostics import evaluate_row
from .grid import Field, Grid2D, same_grid
from .model import (
    ModelSpec,
    diffusion_a,
    noise_sigma,
    noise_sigma_prime,
    reaction_truncated,
    validate_or_raise,
)

log = logging.getLogger(__name__)

CONV_BACKENDS = ("fft", "direct")
STABILITY_MODES = ("strict", "warn")
CLIP_MODES = ("off", "clip_to_bounds")

_REL_TOL = 1e-9  # relative tolerance for "dt divides this gap"


class StabilityError(RuntimeError):
    """Step size violates the parabolic stability bound in strict mode."""

    def __init__(self, report: "StabilityReport"):
        self.report = report
        super().__init__(report.message)


@dataclass(frozen=True)
class BlowUpReport:
    """Where and when a path produced a non-finite value."""

    step: Optional[int]
    t: Optional[float]
    node: tuple[int, int]  # (i, j)
    message: str


class BlowUpError(RuntimeError):
    def __init__(self, report: BlowUpReport):
        self.report = report
        super().__init__(report.message)


def _divides(gap: float, dt: float) -> bool:
    n = round(gap / dt)
    return n >= 0 and abs(n * dt - gap) <= _REL_TOL * max(abs(gap), dt)


@dataclass(frozen=True)
class RunConfig:
    """Time horizon, step size, output schedule and solver switches."""

    t_final: float
    dt: float
    record_times: tuple[float, ...] = ()
    seed: int = 0
    conv_backend: str = "fft"
    stability_mode: str = "strict"
    clip_mode: str = "off"
    white_noise_scaling: bool = False
    monitor_tol: float = 1e-6  # bound-violation tolerance tracked per step
    nu: float = 1e-3  # regularization width for the diagnostics row
    sup_every_step: bool = False
    q0: int = 5

    def __post_init__(self):
        if not (self.t_final >= 0):
            raise ValueError(f"t_final must be nonnegative (got {self.t_final})")
        if self.t_final > 0 and not (0 < self.dt <= self.t_final):
            raise ValueError(f"need 0 < dt <= t_final (got dt={self.dt}, T={self.t_final})")
        if self.conv_backend not in CONV_BACKENDS:
            raise ValueError(f"conv_backend must be one of {CONV_BACKENDS}")
        if self.stability_mode not in STABILITY_MODES:
            raise ValueError(f"stability_mode must be one of {STABILITY_MODES}")
        if self.clip_mode not in CLIP_MODES:
            raise ValueError(f"clip_mode must be one of {CLIP_MODES}")
        rt = tuple(float(t) for t in self.record_times)
        if list(rt) != sorted(rt):
            raise ValueError("record_times must be sorted")
        if rt and (rt[0] < 0 or rt[-1] > self.t_final + _REL_TOL * max(self.t_final, 1.0)):
            raise ValueError("record_times must lie inside [0, t_final]")
        if self.t_final > 0:
            if not _divides(self.t_final, self.dt):
                raise ValueError(
                    f"dt={self.dt} must divide t_final={self.t_final} (rel tol {_REL_TOL})"
                )
            prev = 0.0
            for t in rt:
                if not _divides(t - prev, self.dt):
                    raise ValueError(
                        f"dt={self.dt} must divide the record gap {prev} -> {t}"
                    )
                prev = t
        object.__setattr__(self, "record_times", rt)

    @property
    def n_steps(self) -> int:
        return 0 if self.t_final == 0 else round(self.t_final / self.dt)

    def record_steps(self) -> list[int]:
        return [round(t / self.dt) for t in self.record_times] if self.t_final > 0 else [0]

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class FluxPair:
    """Interior face fluxes; the boundary faces are identically zero.

    ``fx`` has shape (ny, nx-1): fx[j, i] is the flux through face
    (i+1/2, j).  ``fy`` has shape (ny-1, nx): fy[j, i] is the flux through
    face (i, j+1/2).
    """

    grid: Grid2D
    fx: np.ndarray
    fy: np.ndarray

    def __post_init__(self):
        if self.fx.shape != (self.grid.ny, self.grid.nx - 1):
            raise ValueError(f"fx shape {self.fx.shape} wrong for grid {self.grid.shape}")
        if self.fy.shape != (self.grid.ny - 1, self.grid.nx):
            raise ValueError(f"fy shape {self.fy.shape} wrong for grid {self.grid.shape}")


def _flux_arrays(u: np.ndarray, v: Optional[np.ndarray], spec: ModelSpec,
                 dx: float, dy: float) -> tuple[np.ndarray, np.ndarray]:
    a = diffusion_a(u, spec)
    fx = (0.5 / dx) * (a[:, 1:] + a[:, :-1]) * (u[:, 1:] - u[:, :-1])
    fy = (0.5 / dy) * (a[1:, :] + a[:-1, :]) * (u[1:, :] - u[:-1, :])
    if v is not None:
        fx -= (0.5 / dx) * (u[:, 1:] + u[:, :-1]) * (v[:, 1:] - v[:, :-1])
        fy -= (0.5 / dy) * (u[1:, :] + u[:-1, :]) * (v[1:, :] - v[:-1, :])
    return fx, fy


def compute_fluxes(u: Field, v: Optional[Field], spec: ModelSpec) -> FluxPair:
    """Conservative interior-face fluxes from density u and convolution v."""
    if v is not None:
        same_grid(u, v)
    fx, fy = _flux_arrays(u.values, None if v is None else v.values,
                          spec, u.grid.dx, u.grid.dy)
    return FluxPair(grid=u.grid, fx=fx, fy=fy)


def _divergence_raw(fx: np.ndarray, fy: np.ndarray, dx: float, dy: float,
                    out: Optional[np.ndarray] = None) -> np.ndarray:
    ny, nxm1 = fx.shape
    nx = nxm1 + 1
    if out is None:
        out = np.empty((ny, nx))
    # x direction; boundary nodes own half cells
    out[:, 0] = fx[:, 0] / (0.5 * dx)
    out[:, 1:-1] = (fx[:, 1:] - fx[:, :-1]) / dx
    out[:, -1] = -fx[:, -1] / (0.5 * dx)
    # y direction
    out[0, :] += fy[0, :] / (0.5 * dy)
    out[1:-1, :] += (fy[1:, :] - fy[:-1, :]) / dy
    out[-1, :] += -fy[-1, :] / (0.5 * dy)
    return out


def divergence(fluxes: FluxPair) -> Field:
    """Nodal flux divergence; its cell-weighted sum telescopes to exactly zero."""
    g = fluxes.grid
    return Field(g, _divergence_raw(fluxes.fx, fluxes.fy, g.dx, g.dy))


@dataclass(frozen=True)
class StabilityReport:
    status: str  # ok | warning | error
    dt: float
    dt_max: float
    message: str


def stability_dt_max(spec: ModelSpec, grid: Grid2D, theta: float = 0.9) -> float:
    """Largest stable step for the parabolic part: theta*h^2/(2*d*max a)."""
    if spec.diffusion_kind == "degenerate_logistic":
        a_max = spec.ubar**2 / 4.0
    else:
        a_max = spec.a0
    if a_max <= 0:
        return np.inf
    h = min(grid.dx, grid.dy)
    return theta * h * h / (4.0 * a_max)  # d = 2 space dimensions


def snap_dt(gap: float, dt_max: float) -> float:
    """Largest step <= dt_max that divides ``gap`` an integer number of times."""
    if not np.isfinite(dt_max):
        return gap
    n = max(1, int(np.ceil(gap / dt_max - 1e-12)))
    while gap / n > dt_max:  # guard the one-ulp overshoot
        n += 1
    return gap / n


def check_stability(spec: ModelSpec, grid: Grid2D, config: RunConfig) -> StabilityReport:
    """Check dt against the explicit parabolic bound.

    Strict mode raises :class:`StabilityError` on violation; warn mode logs
    and reports status "warning".  A drift-only model (a == 0) is
    unconditionally ok.
    """
    dt_max = stability_dt_max(spec, grid)
    if config.dt <= dt_max:
        return StabilityReport("ok", config.dt, dt_max, "dt within stability bound")
    msg = f"dt={config.dt:.6g} exceeds parabolic stability bound dt_max={dt_max:.6g}"
    if config.stability_mode == "strict":
        raise StabilityError(StabilityReport("error", config.dt, dt_max, msg))
    log.warning(msg)
    return StabilityReport("warning", config.dt, dt_max, msg)


def _find_bad_node(u: np.ndarray) -> tuple[int, int]:
    bad = np.argwhere(~np.isfinite(u))
    if len(bad):
        j, i = bad[0]
    else:  # a reduction overflowed before any node did: blame the extreme
        j, i = np.unravel_index(np.argmax(np.abs(u)), u.shape)
    return (int(i), int(j))


def _milstein_update(u: np.ndarray, dW: Optional[np.ndarray], spec: ModelSpec,
                     config: RunConfig, conv: Optional[Callable],
                     dx: float, dy: float) -> tuple[np.ndarray, int]:
    v = conv(u) if conv is not None else None
    fx, fy = _flux_arrays(u, v, spec, dx, dy)
    rhs = _divergence_raw(fx, fy, dx, dy)
    rhs += reaction_truncated(u, spec)
    un = u + config.dt * rhs
    if dW is not None and spec.noise_kind != "zero":
        s = noise_sigma(u, spec)
        sp = noise_sigma_prime(u, spec)
        un += s * dW + (0.5 * s * sp) * (dW * dW - config.dt)
    clamped = 0
    if config.clip_mode == "clip_to_bounds":
        inside = (un >= 0.0) & (un <= spec.ubar)
        clamped = int(un.size - np.count_nonzero(inside))
        if clamped:
            np.clip(un, 0.0, spec.ubar, out=un)
    return un, clamped


class _Workspace:
    """Preallocated buffers for the per-step update inside run_path.

    Computes the same update as :func:`_milstein_update` without per-step
    allocations (the dominant overhead at desk-scale grids on one core).
    """

    def __init__(self, grid: Grid2D, spec: ModelSpec, config: RunConfig):
        ny, nx = grid.shape
        self.spec = spec
        self.config = config
        self.dx, self.dy = grid.dx, grid.dy
        self.trunc_m = spec.resolved_trunc_m()
        self.a = np.empty((ny, nx))
        self.fx = np.empty((ny, nx - 1))
        self.fy = np.empty((ny - 1, nx))
        self.bx = np.empty((ny, nx - 1))
        self.by = np.empty((ny - 1, nx))
        self.rhs = np.empty((ny, nx))
        self.t1 = np.empty((ny, nx))
        self.t2 = np.empty((ny, nx))
        self.sig = np.empty((ny, nx))
        self.sigp = np.empty((ny, nx))
        self.out = np.empty((ny, nx))

    def _diffusion(self, u: np.ndarray) -> None:
        spec, a = self.spec, self.a
        if spec.diffusion_kind == "degenerate_logistic":
            np.subtract(spec.ubar, u, out=a)
            a *= u
        else:
            a.fill(spec.a0)

    def _reaction_into_rhs(self, u: np.ndarray, umin: float, umax: float) -> None:
        # rhs += f_M(u); the truncation branches only fire outside |u| <= M
        spec, t1, t2 = self.spec, self.t1, self.t2
        np.multiply(u, u, out=t1)
        t1 *= -spec.mu
        np.multiply(u, spec.alpha, out=t2)
        t1 += t2
        m = self.trunc_m
        if umax > m:
            np.copyto(t1, m, where=(u > m))
        if umin < -m:
            np.copyto(t1, -m, where=(u < -m))
        self.rhs += t1

    def _noise_into_out(self, u: np.ndarray, dW: np.ndarray) -> None:
        # out += sigma*dW + 0.5*sigma*sigma'*(dW^2 - dt)
        spec, sig, sigp, t1 = self.spec, self.sig, self.sigp, self.t1
        c = spec.noise_amplitude
        # sigp carries the 0.5 Milstein factor (an exact halving, so the
        # values match the reference update bit for bit)
        if spec.noise_kind == "prop_shifted":
            np.subtract(spec.ubar, u, out=sig)
            np.minimum(u, sig, out=sig)
            sig *= c
            np.subtract(spec.ubar / 2.0, u, out=sigp)
            np.sign(sigp, out=sigp)
            sigp *= 0.5 * c
        else:  # periodic
            np.multiply(u, np.pi / spec.ubar, out=self.t2)
            np.sin(self.t2, out=sig)
            sig *= c
            np.cos(self.t2, out=sigp)
            sigp *= 0.5 * (c * np.pi / spec.ubar)
        np.multiply(dW, dW, out=t1)
        t1 -= self.config.dt
        t1 *= sigp
        t1 += dW
        t1 *= sig
        self.out += t1

    def step(self, u: np.ndarray, dW: Optional[np.ndarray], conv,
             umin: Optional[float] = None, umax: Optional[float] = None
             ) -> tuple[np.ndarray, int]:
        if umin is None:
            umin = float(u.min())
        if umax is None:
            umax = float(u.max())
        dx, dy = self.dx, self.dy
        fx, fy, bx, by = self.fx, self.fy, self.bx, self.by
        self._diffusion(u)
        a = self.a
        v = conv(u) if conv is not None else None
        # fx = (a_mid * du - u_mid * dv) / dx on interior x-faces
        np.add(a[:, 1:], a[:, :-1], out=fx)
        np.subtract(u[:, 1:], u[:, :-1], out=bx)
        fx *= bx
        if v is not None:
            np.add(u[:, 1:], u[:, :-1], out=bx)
            np.subtract(v[:, 1:], v[:, :-1], out=self.t1[:, : fx.shape[1]])
            bx *= self.t1[:, : fx.shape[1]]
            fx -= bx
        fx *= 0.5 / dx
        np.add(a[1:, :], a[:-1, :], out=fy)
        np.subtract(u[1:, :], u[:-1, :], out=by)
        fy *= by
        if v is not None:
            np.add(u[1:, :], u[:-1, :], out=by)
            np.subtract(v[1:, :], v[:-1, :], out=self.t1[: fy.shape[0], :])
            by *= self.t1[: fy.shape[0], :]
            fy -= by
        fy *= 0.5 / dy
        _divergence_raw(fx, fy, dx, dy, out=self.rhs)
        self._reaction_into_rhs(u, umin, umax)
        np.multiply(self.rhs, self.config.dt, out=self.out)
        self.out += u
        if dW is not None and self.spec.noise_kind != "zero":
            self._noise_into_out(u, dW)
        clamped = 0
        if self.config.clip_mode == "clip_to_bounds":
            inside = (self.out >= 0.0) & (self.out <= self.spec.ubar)
            clamped = int(self.out.size - np.count_nonzero(inside))
            if clamped:
                np.clip(self.out, 0.0, self.spec.ubar, out=self.out)
        u_new = self.out
        self.out = u  # double buffering: the old state array is recycled
        return u_new, clamped


def milstein_step(u: Field, dW: Optional[Field], spec: ModelSpec, config: RunConfig,
                  table=None) -> Field:
    """One extended Milstein step from the state ``u``.

    The convolution is evaluated from the current ``u``; pass a prebuilt
    kernel ``table`` to amortize its construction across calls.  Raises
    :class:`BlowUpError` if the update produces non-finite values.
    """
    if dW is not None:
        same_grid(u, dW)
    g = u.grid
    conv = None
    if spec.kernel_kind != "disabled":
        if table is None:
            table = build_table(g, spec)
        raw = convolve_fft_raw if config.conv_backend == "fft" else convolve_direct_raw
        conv = lambda arr: raw(arr, table)
    dw = None
    if dW is not None and spec.noise_kind != "zero":
        dw = dW.values
        if config.white_noise_scaling:
            dw = dw / np.sqrt(g.dx * g.dy)
    un, _ = _milstein_update(u.values, dw, spec, config, conv, g.dx, g.dy)
    if not np.all(np.isfinite(un)):
        node = _find_bad_node(un)
        raise BlowUpError(BlowUpReport(step=None, t=None, node=node,
                                       message=f"non-finite update at node {node}"))
    return Field(g, un)


@dataclass
class PathSeries:
    """Per-step scalar series recorded along one path."""

    times: np.ndarray
    mass: np.ndarray
    min_u: np.ndarray
    max_u: np.ndarray
    below_count: np.ndarray  # nodes with u < -monitor_tol, per step
    above_count: np.ndarray  # nodes with u > ubar + monitor_tol, per step
    clamp_count: np.ndarray
    l2_sq: Optional[np.ndarray]  # only when sup_every_step is enabled
    monitor_tol: float
    ubar: float

    def truncate(self, n: int) -> "PathSeries":
        return PathSeries(self.times[:n], self.mass[:n], self.min_u[:n], self.max_u[:n],
                          self.below_count[:n], self.above_count[:n], self.clamp_count[:n],
                          None if self.l2_sq is None else self.l2_sq[:n],
                          self.monitor_tol, self.ubar)


@dataclass
class PathResult:
    """Everything one path produced: final state, series, records, status."""

    final: Optional[Field]
    series: PathSeries
    rows: list  # DiagnosticsRow at each record time reached
    record_fields: list[Field]
    blow_up: Optional[BlowUpReport]


def run_path(u0: Field, spec: ModelSpec, config: RunConfig, stream=None,
             sinks: Sequence = ()) -> PathResult:
    """Drive one path from t=0 to t_final.

    Deterministic function of (u0, spec, config, stream seed).  At each
    record time the snapshot and its diagnostics row are pushed to every
    sink (objects with ``on_record(t, field, row)``).  A non-finite update
    aborts the path: the series up to the failure step and all records
    already emitted are kept, and the blow-up report is returned in the
    result rather than raised.
    """
    validate_or_raise(spec, u0.grid)
    check_stability(spec, u0.grid, config)
    g = u0.grid
    dx, dy = g.dx, g.dy
    weights = g.cell_areas
    conv = make_convolver(g, spec, config.conv_backend)
    noisy = spec.noise_kind != "zero" and stream is not None
    noise_scale = np.sqrt(config.dt)
    if config.white_noise_scaling:
        noise_scale /= np.sqrt(dx * dy)

    n = config.n_steps
    record_at = set(config.record_steps())
    series = PathSeries(
        times=config.dt * np.arange(n + 1) if n else np.zeros(1),
        mass=np.empty(n + 1), min_u=np.empty(n + 1), max_u=np.empty(n + 1),
        below_count=np.zeros(n + 1, dtype=np.int64),
        above_count=np.zeros(n + 1, dtype=np.int64),
        clamp_count=np.zeros(n + 1, dtype=np.int64),
        l2_sq=np.empty(n + 1) if config.sup_every_step else None,
        monitor_tol=config.monitor_tol, ubar=spec.ubar,
    )
    rows: list = []
    record_fields: list[Field] = []

    bool_buf = np.empty(g.shape, dtype=bool)
    lo_tol = -config.monitor_tol
    hi_tol = spec.ubar + config.monitor_tol

    def sample(k: int, u: np.ndarray) -> None:
        series.mass[k] = np.vdot(weights, u)
        mn = series.min_u[k] = u.min()
        mx = series.max_u[k] = u.max()
        if mn < lo_tol:
            np.less(u, lo_tol, out=bool_buf)
            series.below_count[k] = np.count_nonzero(bool_buf)
        if mx > hi_tol:
            np.greater(u, hi_tol, out=bool_buf)
            series.above_count[k] = np.count_nonzero(bool_buf)
        if series.l2_sq is not None:
            series.l2_sq[k] = np.einsum("ij,ij,ij->", weights, u, u)

    def record(k: int, u: np.ndarray) -> None:
        f = Field(g, u)
        row = evaluate_row(f, spec, nu=config.nu, t=k * config.dt,
                           clamp_count=int(series.clamp_count[k]))
        rows.append(row)
        record_fields.append(f)
        for sink in sinks:
            sink.on_record(row.t, f, row)

    u = u0.mutable_copy()
    ws = _Workspace(g, spec, config)
    sample(0, u)
    if 0 in record_at:
        record(0, u)
    # Increment fields are drawn in batches to amortize generator overhead;
    # consumption order stays step-major, node-layout within each step.
    batch_size = 8
    nn = g.ny * g.nx
    batch = None
    batch_pos = 0
    for k in range(1, n + 1):
        dw = None
        if noisy:
            if batch is None or batch_pos == len(batch):
                take = min(batch_size, n - k + 1)
                batch = stream.standard_normals(take * nn).reshape(take, *g.shape)
                batch *= noise_scale
                batch_pos = 0
            dw = batch[batch_pos]
            batch_pos += 1
        u, clamped = ws.step(u, dw, conv, umin=series.min_u[k - 1],
                             umax=series.max_u[k - 1])
        series.clamp_count[k] = clamped
        sample(k, u)
        if not (np.isfinite(series.min_u[k]) and np.isfinite(series.max_u[k])
                and np.isfinite(series.mass[k])):
            node = _find_bad_node(u)
            report = BlowUpReport(step=k, t=k * config.dt, node=node,
                                  message=f"non-finite value at node {node}, "
                                          f"step {k}, t={k * config.dt:.6g}")
            return PathResult(final=None, series=series.truncate(k), rows=rows,
                              record_fields=record_fields, blow_up=report)
        if k in record_at:
            record(k, u)
    return PathResult(final=Field(g, u), series=series, rows=rows,
                      record_fields=record_fields, blow_up=None)
