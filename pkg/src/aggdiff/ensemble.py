"""Monte-Carlo orchestration over independent paths.

Each path gets its own random stream split off the master seed by path
index, so results are a deterministic function of (seed, n_paths) no
matter how many workers run them; aggregation is an ordered reduction by
path index.  Statistics are computed across the paths that completed; an
ensemble only fails outright when more than 10% of its paths blow up.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Grid2D
from .model import ModelSpec, initial_condition, perturb_initial
from .noise import derive_stream
from .stepper import PathResult, RunConfig, run_path


class EnsembleFailure(RuntimeError):
    """More than 10% of the requested paths blew up."""


@dataclass(frozen=True)
class EnsembleStats:
    """Across-path statistics at each record time plus sup-type estimates.

    Per-time arrays are indexed like ``record_times``.  Variances are
    population variances (ddof=0), so a single path reports zero variance.
    ``e_sup_l2_sq`` estimates the expected supremum over time of the
    squared L2 norm; ``q0_moment`` estimates the q0-th moment of
    ``sup_t ||u||_L2``.  The supremum runs over record times unless the
    run was configured with ``sup_every_step``.
    """

    record_times: tuple[float, ...]
    mean: dict[str, np.ndarray]
    variance: dict[str, np.ndarray]
    min: dict[str, np.ndarray]
    max: dict[str, np.ndarray]
    e_sup_l2_sq: float
    q0: int
    q0_moment: float
    n_paths: int
    n_failed: int
    sup_every_step: bool

    QUANTITIES = ("mass", "l2_sq", "min_u", "max_u")


@dataclass
class EnsembleResult:
    stats: EnsembleStats
    paths: Optional[list[PathResult]]  # retained only when keep_paths is set
    failures: list  # BlowUpReport per failed path


def _one_path(spec: ModelSpec, grid: Grid2D, config: RunConfig, index: int,
              sink_factory=None) -> PathResult:
    stream = derive_stream(config.seed, index)
    u0 = initial_condition(grid, spec)
    if spec.perturb_delta != 0.0:
        u0 = perturb_initial(u0, spec, stream)
    sinks = sink_factory(index) if sink_factory is not None else ()
    return run_path(u0, spec, config, stream=stream, sinks=sinks)


def run_ensemble(spec: ModelSpec, grid: Grid2D, config: RunConfig, n_paths: int,
                 workers: int = 1, keep_paths: bool = False,
                 sink_factory=None) -> EnsembleResult:
    """Run ``n_paths`` independent paths and aggregate their statistics.

    ``workers`` only sets the thread count; the statistics are bitwise
    identical for any worker count at a fixed seed.  ``sink_factory(index)``
    may supply per-path sinks (e.g. to persist per-path outputs).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if config.t_final > 0 and not config.record_times:
        raise ValueError("ensemble statistics require at least one record time")
    indices = list(range(n_paths))
    if workers <= 1:
        results = [_one_path(spec, grid, config, i, sink_factory) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda i: _one_path(spec, grid, config, i, sink_factory), indices))

    failures = [r.blow_up for r in results if r.blow_up is not None]
    ok = [r for r in results if r.blow_up is None]
    if len(failures) > 0.1 * n_paths:
        raise EnsembleFailure(
            f"{len(failures)} of {n_paths} paths blew up (>10%); first: "
            f"{failures[0].message}"
        )
    if not ok:
        raise EnsembleFailure("no path completed")

    times = config.record_times if config.record_times else (0.0,)
    per_time = {q: np.array([[row_val(r, k, q) for k in range(len(times))] for r in ok])
                for q in EnsembleStats.QUANTITIES}

    def _variance(cols: np.ndarray) -> np.ndarray:
        v = cols.var(axis=0, ddof=0)
        v[np.ptp(cols, axis=0) == 0.0] = 0.0  # identical paths: exactly zero
        return v
    sup_l2 = np.array([_sup_l2_sq(r, config) for r in ok])
    stats = EnsembleStats(
        record_times=tuple(times),
        mean={q: per_time[q].mean(axis=0) for q in per_time},
        variance={q: _variance(per_time[q]) for q in per_time},
        min={q: per_time[q].min(axis=0) for q in per_time},
        max={q: per_time[q].max(axis=0) for q in per_time},
        e_sup_l2_sq=float(sup_l2.mean()),
        q0=config.q0,
        q0_moment=float(np.mean(np.sqrt(sup_l2) ** config.q0)),
        n_paths=n_paths,
        n_failed=len(failures),
        sup_every_step=config.sup_every_step,
    )
    return EnsembleResult(stats=stats, paths=results if keep_paths else None,
                          failures=failures)


def row_val(result: PathResult, k: int, quantity: str) -> float:
    return float(getattr(result.rows[k], quantity))


def _sup_l2_sq(result: PathResult, config: RunConfig) -> float:
    if config.sup_every_step and result.series.l2_sq is not None:
        return float(result.series.l2_sq.max())
    return max(row.l2_sq for row in result.rows)


@dataclass(frozen=True)
class MassCurveComparison:
    """Aligned mass curves of two runs: mean and std band per time point."""

    times: tuple[float, ...]
    mean_a: np.ndarray
    std_a: np.ndarray
    mean_b: np.ndarray
    std_b: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.mean_b - self.mean_a

    def rows(self):
        for k, t in enumerate(self.times):
            yield (t, self.mean_a[k], self.std_a[k], self.mean_b[k], self.std_b[k],
                   self.difference[k])

    COLUMNS = ("t", "mean_mass_a", "std_mass_a", "mean_mass_b", "std_mass_b", "diff")


def mass_curve_compare(stats_a: EnsembleStats, stats_b: EnsembleStats) -> MassCurveComparison:
    """Tabulate two ensembles' mass curves on their shared record times."""
    if stats_a.record_times != stats_b.record_times:
        raise ValueError(
            f"record times differ: {stats_a.record_times} vs {stats_b.record_times}"
        )
    return MassCurveComparison(
        times=stats_a.record_times,
        mean_a=stats_a.mean["mass"], std_a=np.sqrt(stats_a.variance["mass"]),
        mean_b=stats_b.mean["mass"], std_b=np.sqrt(stats_b.variance["mass"]),
    )
