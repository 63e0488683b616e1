"""Monitored functionals along trajectories.

Numerical counterparts of the properties the continuous analysis
guarantees: positivity/boundedness monitors built on a smooth
regularization of the squared negative part, the nonlinear energy
quantities (L1 norm of the double antiderivative, squared gradient of the
antiderivative), and bound-violation bookkeeping for whole runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field
from .model import ModelSpec, antiderivative_A, antiderivative_AA


def stampacchia_R(u, nu: float):
    """Smooth regularization of the squared negative part.

    Piecewise: ``u^2 - nu^2/6`` for u < -nu,
    ``-u^4/(2 nu^2) - 4 u^3/(3 nu)`` for -nu <= u < 0, and 0 for u >= 0.
    Continuous at both junctions, nonnegative everywhere, and converges
    uniformly to ``(u^-)^2`` as nu -> 0.
    """
    if nu <= 0:
        raise ValueError(f"nu must be positive (got {nu})")
    u = np.asarray(u, dtype=np.float64)
    mid = -(u**4) / (2.0 * nu * nu) - 4.0 * u**3 / (3.0 * nu)
    out = np.where(u < -nu, u * u - nu * nu / 6.0, np.where(u < 0.0, mid, 0.0))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DiagnosticsRow:
    """One sampled time point of the monitored functionals.

    Column order is fixed and versioned; see docs/FORMATS.md.
    """

    t: float
    mass: float
    min_u: float
    max_u: float
    l2_sq: float
    energy_A_l1: float
    grad_A_l2_sq: float
    stamp_neg: float
    stamp_upper: float
    clamp_count: int

    COLUMNS = ("t", "mass", "min_u", "max_u", "l2_sq", "energy_A_l1",
               "grad_A_l2_sq", "stamp_neg", "stamp_upper", "clamp_count")

    def astuple(self):
        return tuple(getattr(self, c) for c in self.COLUMNS)


def evaluate_row(u: Field, spec: ModelSpec, nu: float = 1e-3, t: float = 0.0,
                 clamp_count: int = 0) -> DiagnosticsRow:
    """Evaluate all monitored functionals on one field.

    The gradient of A(u) is discretized on the interior faces with the same
    differences the fluxes use; each x-face carries measure dx * (transverse
    cell width), so boundary-row faces count half.  The two regularized
    negative-part integrals watch ``u < 0`` and ``u > ubar`` respectively.
    """
    g = u.grid
    w = g.cell_areas
    vals = u.values
    a_big = antiderivative_AA(vals, spec)
    A = antiderivative_A(vals, spec)
    wx = g.cell_weights_1d("x")
    wy = g.cell_weights_1d("y")
    gax = (A[:, 1:] - A[:, :-1]) / g.dx  # (ny, nx-1)
    gay = (A[1:, :] - A[:-1, :]) / g.dy  # (ny-1, nx)
    grad_sq = float(np.sum((gax * gax) * (wy[:, None] * g.dx))
                    + np.sum((gay * gay) * (wx[None, :] * g.dy)))
    return DiagnosticsRow(
        t=t,
        mass=float(np.sum(w * vals)),
        min_u=float(vals.min()),
        max_u=float(vals.max()),
        l2_sq=float(np.sum(w * vals * vals)),
        energy_A_l1=float(np.sum(w * np.abs(a_big))),
        grad_A_l2_sq=grad_sq,
        stamp_neg=float(np.sum(w * stampacchia_R(vals, nu))),
        stamp_upper=float(np.sum(w * stampacchia_R(spec.ubar - vals, nu))),
        clamp_count=clamp_count,
    )


@dataclass(frozen=True)
class ViolationSummary:
    """Bound-violation bookkeeping for one trajectory.

    When ``tol`` equals the tolerance the path monitored per step, the
    counts are exact node-step counts; otherwise they are recomputed from
    the per-step extremes and count violating steps (at least one node
    each), which is flagged by ``exact=False``.
    """

    tol: float
    exact: bool
    below: int
    above: int
    worst_min: float
    worst_min_t: float
    worst_max: float
    worst_max_t: float

    @property
    def total(self) -> int:
        return self.below + self.above


def bound_violation_report(series, tol: float) -> ViolationSummary:
    """Summarize excursions outside [-tol, ubar + tol] along a path.

    ``series`` is a per-step record (:class:`aggdiff.stepper.PathSeries`)
    carrying times, extremes, and the node counts monitored at its own
    tolerance.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    kmin = int(np.argmin(series.min_u))
    kmax = int(np.argmax(series.max_u))
    if tol == series.monitor_tol:
        below = int(series.below_count.sum())
        above = int(series.above_count.sum())
        exact = True
    else:
        below = int(np.count_nonzero(series.min_u < -tol))
        above = int(np.count_nonzero(series.max_u > series.ubar + tol))
        exact = False
    return ViolationSummary(
        tol=tol, exact=exact, below=below, above=above,
        worst_min=float(series.min_u[kmin]), worst_min_t=float(series.times[kmin]),
        worst_max=float(series.max_u[kmax]), worst_max_t=float(series.times[kmax]),
    )


def count_clusters(u: Field, level_fraction: float = 0.5) -> int:
    """Number of 4-connected components above ``level_fraction * max(u)``.

    Qualitative aggregation metric: the merging of density clusters shows
    up as this count dropping over time.
    """
    vals = u.values
    mask = vals > level_fraction * vals.max()
    labels = np.zeros(vals.shape, dtype=np.int32)
    ny, nx = vals.shape
    count = 0
    stack: list[tuple[int, int]] = []
    for j0 in range(ny):
        for i0 in range(nx):
            if mask[j0, i0] and labels[j0, i0] == 0:
                count += 1
                labels[j0, i0] = count
                stack.append((j0, i0))
                while stack:
                    j, i = stack.pop()
                    for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        a, b = j + dj, i + di
                        if 0 <= a < ny and 0 <= b < nx and mask[a, b] and labels[a, b] == 0:
                            labels[a, b] = count
                            stack.append((a, b))
    return count
