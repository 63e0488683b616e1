"""Continuous model ingredients and their validation.

Houses the density-dependent diffusion rate ``a`` with its antiderivatives,
the logistic reaction and its bounded truncation, the noise intensities and
their derivatives, the normalized Gaussian interaction kernel, and the
built-in initial conditions.  All functions accept scalars or numpy arrays
and never clamp their inputs: callers may evaluate outside ``[0, ubar]`` and
get the analytic continuation (that is what the bound monitors rely on).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .grid import Field, Grid2D

DIFFUSION_KINDS = ("degenerate_logistic", "constant")
NOISE_KINDS = ("zero", "prop_shifted", "periodic")
KERNEL_KINDS = ("gaussian_normalized", "disabled")
KERNEL_NORMALIZERS = ("analytic", "discrete_sum")
INIT_KINDS = (
    "three_bumps",
    "three_bumps_symmetrized",
    "single_cosine",
    "constant",
    "custom_table",
)


class SpecValidationError(ValueError):
    """Model specification violates one of its standing assumptions."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(report.violations) or "invalid model spec")


@dataclass(frozen=True)
class ModelSpec:
    """All model parameters and ingredient selections.

    ``trunc_m=None`` means the default truncation level
    ``2*max(ubar, max_{[0,ubar]} |f|)``, which keeps the truncated reaction
    equal to the plain one on the whole reachable density range.
    """

    ubar: float = 4.0
    alpha: float = 0.4
    mu: float = 0.5
    trunc_m: Optional[float] = None
    diffusion_kind: str = "degenerate_logistic"
    a0: float = 1.0  # rate for diffusion_kind="constant"
    noise_kind: str = "zero"
    noise_amplitude: float = 1.2
    kernel_kind: str = "gaussian_normalized"
    kernel_normalizer: str = "analytic"
    kernel_cutoff: Optional[float] = None
    init_kind: str = "three_bumps"
    cosine_mode: tuple[int, int] = (1, 0)
    cosine_amplitude: float = 0.1
    cosine_offset: float = 1.0
    constant_value: float = 1.0
    table_path: Optional[str] = None
    perturb_delta: float = 0.0
    perturb_margin: float = 1e-6

    def resolved_trunc_m(self) -> float:
        if self.trunc_m is not None:
            return self.trunc_m
        return 2.0 * max(self.ubar, max_abs_reaction(self))

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)


def max_abs_reaction(spec: ModelSpec) -> float:
    """max |f| over [0, ubar]; f is quadratic so the candidates are exact."""
    cands = [0.0, spec.ubar]
    if spec.mu > 0:
        vertex = spec.alpha / (2.0 * spec.mu)
        if 0.0 <= vertex <= spec.ubar:
            cands.append(vertex)
    return max(abs(spec.alpha * u - spec.mu * u * u) for u in cands)


def diffusion_a(u, spec: ModelSpec):
    """Diffusion rate a(u).

    Degenerate logistic: ``u*(ubar - u)``, vanishing at both 0 and ubar
    (volume filling).  Constant: ``a0``.  Total function; negative returns
    outside [0, ubar] are intentional.
    """
    u = np.asarray(u, dtype=np.float64)
    if spec.diffusion_kind == "degenerate_logistic":
        out = u * (spec.ubar - u)
    elif spec.diffusion_kind == "constant":
        out = np.full_like(u, spec.a0)
    else:
        raise ValueError(f"unknown diffusion_kind {spec.diffusion_kind!r}")
    return out if out.ndim else float(out)


def antiderivative_A(u, spec: ModelSpec):
    """A(u) = integral of a from 0 to u (closed form)."""
    u = np.asarray(u, dtype=np.float64)
    if spec.diffusion_kind == "degenerate_logistic":
        out = spec.ubar * u**2 / 2.0 - u**3 / 3.0
    elif spec.diffusion_kind == "constant":
        out = spec.a0 * u
    else:
        raise ValueError(f"unknown diffusion_kind {spec.diffusion_kind!r}")
    return out if out.ndim else float(out)


def antiderivative_AA(u, spec: ModelSpec):
    """Double antiderivative of a (integral of A from 0 to u)."""
    u = np.asarray(u, dtype=np.float64)
    if spec.diffusion_kind == "degenerate_logistic":
        out = spec.ubar * u**3 / 6.0 - u**4 / 12.0
    elif spec.diffusion_kind == "constant":
        out = spec.a0 * u**2 / 2.0
    else:
        raise ValueError(f"unknown diffusion_kind {spec.diffusion_kind!r}")
    return out if out.ndim else float(out)


def reaction_f(u, spec: ModelSpec):
    """Logistic growth/competition reaction ``alpha*u - mu*u**2``."""
    u = np.asarray(u, dtype=np.float64)
    out = spec.alpha * u - spec.mu * u * u
    return out if out.ndim else float(out)


def reaction_truncated(u, spec: ModelSpec):
    """Bounded reaction: f(u) for |u| <= M, the constant +-M beyond.

    The piecewise form is deliberately discontinuous at |u| = M; it is only
    ever active far outside the physical range when M is at its default.
    """
    u = np.asarray(u, dtype=np.float64)
    m = spec.resolved_trunc_m()
    f = spec.alpha * u - spec.mu * u * u
    out = np.where(u > m, m, np.where(u < -m, -m, f))
    return out if out.ndim else float(out)


def noise_sigma(u, spec: ModelSpec):
    """Noise intensity sigma(u) for the configured kind.

    zero: 0.  prop_shifted(c): ``c*min(u, ubar-u)``.
    periodic(c): ``c*sin(pi*u/ubar)``.  Both nonzero kinds vanish at u=0
    and u=ubar, the condition under which bounds are preserved.
    """
    u = np.asarray(u, dtype=np.float64)
    if spec.noise_kind == "zero":
        out = np.zeros_like(u)
    elif spec.noise_kind == "prop_shifted":
        out = spec.noise_amplitude * np.minimum(u, spec.ubar - u)
    elif spec.noise_kind == "periodic":
        out = spec.noise_amplitude * np.sin(np.pi * u / spec.ubar)
    else:
        raise ValueError(f"unknown noise_kind {spec.noise_kind!r}")
    return out if out.ndim else float(out)


def noise_sigma_prime(u, spec: ModelSpec):
    """Derivative of noise_sigma.

    At the prop_shifted kink u = ubar/2 the value is 0, the symmetric
    subgradient choice: the second-order noise correction then vanishes at
    the kink instead of following an arbitrary branch.
    """
    u = np.asarray(u, dtype=np.float64)
    if spec.noise_kind == "zero":
        out = np.zeros_like(u)
    elif spec.noise_kind == "prop_shifted":
        c, half = spec.noise_amplitude, spec.ubar / 2.0
        out = np.where(u < half, c, np.where(u > half, -c, 0.0))
    elif spec.noise_kind == "periodic":
        c = spec.noise_amplitude * np.pi / spec.ubar
        out = c * np.cos(np.pi * u / spec.ubar)
    else:
        raise ValueError(f"unknown noise_kind {spec.noise_kind!r}")
    return out if out.ndim else float(out)


def kernel_value(x, y):
    """Normalized Gaussian interaction kernel ``exp(-(x^2+y^2)/2) / (2*pi)``.

    The normalizer is the exact integral of the unnormalized kernel over the
    whole plane, so the kernel has unit mass.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.exp(-(x * x + y * y) / 2.0) / (2.0 * math.pi)
    return out if out.ndim else float(out)


def _three_bumps(x, y, symmetrized: bool):
    first_sq = (x + 1.0) ** 2 + (y**2 if symmetrized else x**2)
    return (
        2.0 * np.exp(-first_sq)
        + 1.5 * np.exp(-(x**2 + (y - 1.0) ** 2))
        + 2.0 * np.exp(-((x - 1.5) ** 2 + (y + 1.0) ** 2))
    )


def initial_condition(grid: Grid2D, spec: ModelSpec) -> Field:
    """Sample the configured initial condition at the grid nodes.

    ``three_bumps`` keeps the first bump's x-only exponent exactly as
    configured upstream (it is a ridge in y); ``three_bumps_symmetrized``
    replaces it with the round bump centered at (-1, 0).
    """
    X, Y = grid.meshgrid()
    kind = spec.init_kind
    if kind in ("three_bumps", "three_bumps_symmetrized"):
        vals = _three_bumps(X, Y, symmetrized=(kind == "three_bumps_symmetrized"))
        if vals.max() >= spec.ubar:
            raise SpecValidationError(
                ValidationReport(
                    ok=False,
                    violations=[
                        f"initial condition exceeds ubar: max u0 = {vals.max():.6g} "
                        f">= ubar = {spec.ubar:.6g}"
                    ],
                )
            )
    elif kind == "single_cosine":
        kx, ky = spec.cosine_mode
        lx = grid.xmax - grid.xmin
        ly = grid.ymax - grid.ymin
        vals = spec.cosine_offset + spec.cosine_amplitude * np.cos(
            kx * np.pi * (X - grid.xmin) / lx
        ) * np.cos(ky * np.pi * (Y - grid.ymin) / ly)
    elif kind == "constant":
        vals = np.full(grid.shape, spec.constant_value)
    elif kind == "custom_table":
        if spec.table_path is None:
            raise ValueError("init_kind='custom_table' requires table_path")
        from .snapshots import read_snapshot  # local import: avoids a cycle

        snap = read_snapshot(spec.table_path)
        if snap.field.grid != grid:
            raise ValueError(
                f"custom table grid {snap.field.grid} does not match run grid {grid}"
            )
        vals = snap.field.values
    else:
        raise ValueError(f"unknown init_kind {kind!r}")
    return Field(grid, vals)


def perturb_initial(u0: Field, spec: ModelSpec, stream, delta: Optional[float] = None) -> Field:
    """Multiplicative Gaussian perturbation of the initial state.

    Returns ``clamp(u0 * (1 + delta*xi), 0, ubar - margin)`` with one
    standard normal ``xi`` per node drawn from ``stream`` in field layout
    order.  ``delta`` defaults to ``spec.perturb_delta``.
    """
    if delta is None:
        delta = spec.perturb_delta
    if delta == 0.0:
        return u0
    xi = stream.standard_normals(u0.grid.ny * u0.grid.nx).reshape(u0.grid.shape)
    vals = u0.values * (1.0 + delta * xi)
    np.clip(vals, 0.0, spec.ubar - spec.perturb_margin, out=vals)
    return Field(u0.grid, vals)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: list[str]


def validate(spec: ModelSpec, grid: Grid2D) -> ValidationReport:
    """Check every standing assumption; returns a report naming violations."""
    bad: list[str] = []

    if not (spec.ubar > 0):
        bad.append(f"ubar must be positive (got {spec.ubar})")
    if spec.alpha < 0:
        bad.append(f"alpha must be nonnegative (got {spec.alpha})")
    if spec.mu < 0:
        bad.append(f"mu must be nonnegative (got {spec.mu})")

    for name, options in (
        ("diffusion_kind", DIFFUSION_KINDS),
        ("noise_kind", NOISE_KINDS),
        ("kernel_kind", KERNEL_KINDS),
        ("kernel_normalizer", KERNEL_NORMALIZERS),
        ("init_kind", INIT_KINDS),
    ):
        if getattr(spec, name) not in options:
            bad.append(f"{name} must be one of {options} (got {getattr(spec, name)!r})")
            return ValidationReport(ok=False, violations=bad)

    if spec.ubar > 0:
        m = spec.resolved_trunc_m()
        fmax = max_abs_reaction(spec)
        if m < fmax:
            bad.append(
                f"trunc_m = {m:.6g} is below max |f| on [0, ubar] = {fmax:.6g}; "
                "truncation would distort the reachable range"
            )

        if spec.diffusion_kind == "degenerate_logistic":
            if diffusion_a(0.0, spec) != 0.0 or diffusion_a(spec.ubar, spec) != 0.0:
                bad.append("diffusion must vanish at u=0 and u=ubar")
            samples = np.linspace(0.0, spec.ubar, 1001)[1:-1]
            if not np.all(diffusion_a(samples, spec) > 0):
                bad.append("diffusion must be positive strictly inside (0, ubar)")
        elif spec.a0 < 0:
            bad.append(f"constant diffusion rate a0 must be nonnegative (got {spec.a0})")

        if spec.noise_kind != "zero":
            s0 = abs(noise_sigma(0.0, spec))
            s1 = abs(noise_sigma(spec.ubar, spec))
            if max(s0, s1) > 1e-12:
                bad.append(
                    f"noise intensity must vanish at u=0 and u=ubar "
                    f"(got sigma(0)={s0:.3g}, sigma(ubar)={s1:.3g})"
                )

        if spec.init_kind in ("three_bumps", "three_bumps_symmetrized"):
            try:
                initial_condition(grid, spec)
            except SpecValidationError as e:
                bad.extend(e.report.violations)

    if not (0 < spec.perturb_margin < spec.ubar):
        bad.append(f"perturb_margin must lie in (0, ubar) (got {spec.perturb_margin})")
    if spec.kernel_cutoff is not None and spec.kernel_cutoff <= 0:
        bad.append(f"kernel_cutoff must be positive when set (got {spec.kernel_cutoff})")

    return ValidationReport(ok=not bad, violations=bad)


def validate_or_raise(spec: ModelSpec, grid: Grid2D) -> None:
    report = validate(spec, grid)
    if not report.ok:
        raise SpecValidationError(report)
