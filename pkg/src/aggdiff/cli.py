"""Command-line interface.

Subcommands: ``run`` (single path), ``ensemble`` (Monte-Carlo paths),
``galerkin`` (spectral cross-check solver), ``convergence`` (mesh/time
refinement error tables), ``figs`` (regenerates the standard figure set).
Every command writes delimited series output, rendered PNG figures, and a
JSON run manifest (written last; its presence marks a completed run).

Exit codes: 0 success, 2 configuration error, 3 blow-up or failed ensemble.
Environment overrides: ``AGGDIFF_OUT_DIR`` (output root) and
``AGGDIFF_WORKERS`` (default ensemble worker count).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, ParsedConfig, parse_config_full, write_manifest
from .diagnostics import count_clusters
from .ensemble import EnsembleFailure, run_ensemble
from .figures import convergence_plot, density_panels, heatmap, mass_curves
from .galerkin import build_basis, initial_state, run_galerkin
from .grid import Field, Grid2D, norms
from .model import (
    ModelSpec,
    SpecValidationError,
    initial_condition,
    perturb_initial,
    validate_or_raise,
)
from .noise import derive_stream
from .sinks import (
    CsvSeriesSink,
    SnapshotDirSink,
    write_ensemble_csv,
    write_mass_csv,
)
from .stepper import RunConfig, StabilityError, run_path, snap_dt, stability_dt_max

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3


def _out_dir(args, command: str) -> str:
    if args.out_dir:
        path = args.out_dir
    else:
        root = os.environ.get("AGGDIFF_OUT_DIR", "aggdiff_out")
        path = os.path.join(root, command)
    os.makedirs(path, exist_ok=True)
    return path


def _overrides(args) -> dict:
    ov = {}
    if getattr(args, "seed", None) is not None:
        ov[("noise", "seed")] = str(args.seed)
    if getattr(args, "backend", None) is not None:
        ov[("time", "backend")] = args.backend
    return ov


def _load(args) -> ParsedConfig:
    parsed = parse_config_full(args.config, _overrides(args))
    validate_or_raise(parsed.spec, parsed.grid)
    return parsed


def _initial(parsed: ParsedConfig, stream):
    u0 = initial_condition(parsed.grid, parsed.spec)
    if parsed.spec.perturb_delta != 0.0:
        u0 = perturb_initial(u0, parsed.spec, stream)
    return u0


def _path_figures(out, parsed, result) -> None:
    if result.rows:
        density_panels(
            [(row.t, f) for row, f in zip(result.rows, result.record_fields)],
            parsed.spec.ubar, os.path.join(out, "density_panels.png"))
    mass_curves([("run", result.series.times, result.series.mass)],
                os.path.join(out, "mass_curve.png"))
    if result.final is not None:
        heatmap(result.final, parsed.spec.ubar, os.path.join(out, "final_state.png"),
                title=f"t = {parsed.run.t_final:g}")


def cmd_run(args) -> int:
    parsed = _load(args)
    out = _out_dir(args, "run")
    t0 = time.perf_counter()
    stream = derive_stream(parsed.run.seed, 0)
    u0 = _initial(parsed, stream)
    sinks = [CsvSeriesSink(os.path.join(out, "series.csv"))]
    if parsed.output.snapshots:
        sinks.append(SnapshotDirSink(out, parsed.spec.ubar, pgm=parsed.output.pgm))
    result = run_path(u0, parsed.spec, parsed.run, stream=stream, sinks=sinks)
    sinks[0].close()
    if parsed.output.figures:
        _path_figures(out, parsed, result)
    if result.blow_up is not None:
        print(f"error: path blew up: {result.blow_up.message}", file=sys.stderr)
        return EXIT_BLOWUP
    write_manifest(os.path.join(out, "run_manifest.json"), "run", parsed,
                   time.perf_counter() - t0)
    print(f"run complete: {len(result.rows)} records in {out}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    parsed = _load(args)
    out = _out_dir(args, "ensemble")
    t0 = time.perf_counter()
    workers = args.workers or int(os.environ.get("AGGDIFF_WORKERS", "1"))

    sink_factory = None
    if args.keep_paths:
        def sink_factory(index: int):
            pdir = os.path.join(out, "paths", f"p{index:04d}")
            os.makedirs(pdir, exist_ok=True)
            path_sinks = [CsvSeriesSink(os.path.join(pdir, "series.csv"))]
            if parsed.output.snapshots:
                path_sinks.append(SnapshotDirSink(pdir, parsed.spec.ubar,
                                                  pgm=parsed.output.pgm))
            return path_sinks

    result = run_ensemble(parsed.spec, parsed.grid, parsed.run, n_paths=args.paths,
                          workers=workers, keep_paths=False, sink_factory=sink_factory)
    stats = result.stats
    write_ensemble_csv(os.path.join(out, "ensemble_stats.csv"), stats)
    if parsed.output.figures:
        mass_curves(
            [("ensemble mean", stats.record_times, stats.mean["mass"],
              np.sqrt(stats.variance["mass"]))],
            os.path.join(out, "mass_mean_std.png"),
            title=f"mass over {stats.n_paths} paths")
    write_manifest(os.path.join(out, "ensemble_manifest.json"), "ensemble", parsed,
                   time.perf_counter() - t0,
                   extras={"n_paths": args.paths, "workers": workers,
                           "failed_paths": stats.n_failed,
                           "e_sup_l2_sq": stats.e_sup_l2_sq,
                           "q0_moment": stats.q0_moment})
    print(f"ensemble complete: {args.paths} paths ({stats.n_failed} failed) in {out}")
    return EXIT_OK


def cmd_galerkin(args) -> int:
    parsed = _load(args)
    out = _out_dir(args, "galerkin")
    t0 = time.perf_counter()
    basis = build_basis(parsed.grid, args.modes)
    stream = derive_stream(parsed.run.seed, 0)
    u0 = _initial(parsed, stream)
    state0 = initial_state(u0, basis, parsed.spec, epsilon=args.epsilon)
    sinks = [CsvSeriesSink(os.path.join(out, "series.csv"))]
    if parsed.output.snapshots:
        sinks.append(SnapshotDirSink(out, parsed.spec.ubar, pgm=parsed.output.pgm))
    result = run_galerkin(state0, basis, parsed.spec, parsed.run, stream=stream,
                          sinks=sinks)
    sinks[0].close()
    if parsed.output.figures and result.rows:
        density_panels([(row.t, f) for row, f in zip(result.rows, result.record_fields)],
                       parsed.spec.ubar, os.path.join(out, "density_panels.png"))
    if result.blow_up is not None:
        print(f"error: galerkin solve blew up: {result.blow_up.message}", file=sys.stderr)
        return EXIT_BLOWUP
    write_manifest(os.path.join(out, "galerkin_manifest.json"), "galerkin", parsed,
                   time.perf_counter() - t0,
                   extras={"basis": "cosine-neumann-rectangle", "n_modes": args.modes,
                           "epsilon": result.states[0].epsilon if result.states
                           else state0.epsilon})
    print(f"galerkin complete: {args.modes}^2 modes in {out}")
    return EXIT_OK


def _heat_setup(nx: int, a0: float = 1.0) -> tuple[ModelSpec, Grid2D]:
    spec = ModelSpec(ubar=4.0, alpha=0.0, mu=0.0, diffusion_kind="constant", a0=a0,
                     noise_kind="zero", kernel_kind="disabled",
                     init_kind="single_cosine", cosine_mode=(1, 0),
                     cosine_amplitude=0.5, cosine_offset=1.0)
    return spec, Grid2D(nx=nx, ny=nx)


def heat_exact_field(grid: Grid2D, spec: ModelSpec, a0: float, t: float) -> Field:
    """Separated cosine-mode solution of the constant-diffusion equation."""
    kx, ky = spec.cosine_mode
    lx = grid.xmax - grid.xmin
    ly = grid.ymax - grid.ymin
    lam = (kx * np.pi / lx) ** 2 + (ky * np.pi / ly) ** 2
    X, Y = grid.meshgrid()
    vals = spec.cosine_offset + spec.cosine_amplitude * np.exp(-a0 * lam * t) * np.cos(
        kx * np.pi * (X - grid.xmin) / lx) * np.cos(ky * np.pi * (Y - grid.ymin) / ly)
    return Field(grid, vals)


def heat_error(nx: int, dt_fraction: float = 0.5, a0: float = 1.0,
               t_final: float = 1.0) -> tuple[float, float]:
    """(relative L2 error, dt) of the heat benchmark at one resolution."""
    spec, grid = _heat_setup(nx, a0)
    dt = snap_dt(t_final, stability_dt_max(spec, grid) * dt_fraction)
    config = RunConfig(t_final=t_final, dt=dt, record_times=(t_final,))
    result = run_path(initial_condition(grid, spec), spec, config)
    exact = heat_exact_field(grid, spec, a0, t_final)
    err = norms(Field(grid, result.final.values - exact.values)).l2 / norms(exact).l2
    return err, dt


def cmd_convergence(args) -> int:
    out = _out_dir(args, "convergence")
    import csv as _csv

    rows = []
    if args.mode == "heat":
        sizes = args.resolutions or [17, 33, 65, 129]
        for nx in sizes:
            err, dt = heat_error(nx)
            rows.append((nx, dt, err))
        xs = [r[0] for r in rows]
        label = "nx"
    else:  # time refinement at fixed mesh, against a fine-step reference
        nx = 65
        spec, grid = _heat_setup(nx)
        bound = stability_dt_max(spec, grid)
        u0 = initial_condition(grid, spec)

        def solve(dt_target):
            dt = snap_dt(1.0, dt_target)
            cfg = RunConfig(t_final=1.0, dt=dt, record_times=(1.0,))
            return run_path(u0, spec, cfg).final, dt

        ref, _ = solve(bound / 64)
        for frac in (1.0, 0.5, 0.25, 0.125):
            sol, dt = solve(bound * frac)
            err = (norms(Field(grid, sol.values - ref.values)).l2
                   / norms(ref).l2)
            rows.append((nx, dt, err))
        xs = [r[1] for r in rows]
        label = "dt"

    csv_path = os.path.join(out, f"convergence_{args.mode}.csv")
    with open(csv_path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["nx", "dt", "rel_l2_error", "observed_order"])
        for k, (nx, dt, err) in enumerate(rows):
            if k == 0:
                order = ""
            elif args.mode == "heat":
                order = repr(float(np.log2(rows[k - 1][2] / err)))
            else:
                order = repr(float(np.log(rows[k - 1][2] / err)
                                   / np.log(rows[k - 1][1] / dt)))
            w.writerow([nx, repr(float(dt)), repr(float(err)), order])
    convergence_plot(xs, [r[2] for r in rows], os.path.join(out, f"convergence_{args.mode}.png"),
                     xlabel=label, title=f"{args.mode} refinement")
    print(f"convergence table written to {csv_path}")
    return EXIT_OK


FIG_RUNS = {
    "fig1": dict(noise_kind="zero", perturb_delta=0.0),
    "fig2": dict(noise_kind="prop_shifted", perturb_delta=0.0),
    "fig3": dict(noise_kind="periodic", perturb_delta=0.0),
    "fig4": dict(noise_kind="prop_shifted", perturb_delta=0.1),
    "fig5": dict(noise_kind="periodic", perturb_delta=0.1),
    "fig7det": dict(noise_kind="zero", perturb_delta=0.1),
}


def figs_spec(variant: str, **kw) -> ModelSpec:
    init = "three_bumps" if variant == "printed" else "three_bumps_symmetrized"
    return ModelSpec(ubar=4.0, alpha=0.4, mu=0.5, noise_amplitude=1.2,
                     init_kind=init, **kw)


def cmd_figs(args) -> int:
    out = _out_dir(args, "figs")
    t0 = time.perf_counter()
    grid = Grid2D(nx=args.nx, ny=args.nx)
    variants = ["printed", "symmetrized"] if args.variant == "both" else [args.variant]
    summary = {}
    for variant in variants:
        tag = "" if variant == "printed" else "_symmetrized"
        results = {}
        for name, kw in FIG_RUNS.items():
            spec = figs_spec(variant, **kw)
            dt = snap_dt(4.0, stability_dt_max(spec, grid))  # divides the record gap
            config = RunConfig(t_final=12.0, dt=dt, record_times=(0.0, 4.0, 8.0, 12.0),
                               seed=args.seed, conv_backend=args.backend or "fft")
            stream = derive_stream(config.seed, 0)
            u0 = _initial_figs(grid, spec, stream)
            sinks = [SnapshotDirSink(out, spec.ubar, prefix=f"{name}{tag}", pgm=True)]
            result = run_path(u0, spec, config, stream=stream, sinks=sinks)
            if result.blow_up is not None:
                print(f"error: {name}{tag} blew up: {result.blow_up.message}",
                      file=sys.stderr)
                return EXIT_BLOWUP
            results[name] = result
            if name != "fig7det":
                density_panels([(r.t, f) for r, f in
                                zip(result.rows, result.record_fields)],
                               spec.ubar, os.path.join(out, f"{name}{tag}.png"),
                               title=f"{name} ({variant} initial data)")
        mass6 = [("deterministic", results["fig1"].series.times, results["fig1"].series.mass),
                 ("prop_shifted", results["fig2"].series.times, results["fig2"].series.mass),
                 ("periodic", results["fig3"].series.times, results["fig3"].series.mass)]
        mass_curves(mass6, os.path.join(out, f"fig6{tag}.png"),
                    title="total mass: deterministic vs noisy")
        write_mass_csv(os.path.join(out, f"fig6{tag}.csv"), mass6)
        mass7 = [("deterministic", results["fig7det"].series.times, results["fig7det"].series.mass),
                 ("prop_shifted", results["fig4"].series.times, results["fig4"].series.mass),
                 ("periodic", results["fig5"].series.times, results["fig5"].series.mass)]
        mass_curves(mass7, os.path.join(out, f"fig7{tag}.png"),
                    title="total mass: perturbed initial data")
        write_mass_csv(os.path.join(out, f"fig7{tag}.csv"), mass7)
        clusters = {f"t{row.t:g}": count_clusters(f)
                    for row, f in zip(results["fig1"].rows, results["fig1"].record_fields)}
        summary[variant] = {"fig1_clusters": clusters}
    elapsed = time.perf_counter() - t0
    import json

    with open(os.path.join(out, "figs_summary.json"), "w") as fh:
        json.dump({"nx": args.nx, "seed": args.seed, "variants": summary,
                   "elapsed_seconds": elapsed, "code_version": __version__},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"figures written to {out}")
    return EXIT_OK


def _initial_figs(grid: Grid2D, spec: ModelSpec, stream) -> Field:
    u0 = initial_condition(grid, spec)
    if spec.perturb_delta != 0.0:
        u0 = perturb_initial(u0, spec, stream)
    return u0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aggdiff",
                                description="Aggregation-diffusion simulation engine")
    p.add_argument("--version", action="version", version=f"aggdiff {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_config=True):
        if with_config:
            sp.add_argument("--config", required=True,
                            help="config file or run manifest (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="override master seed")
        sp.add_argument("--out-dir", default=None, help="output directory")
        sp.add_argument("--backend", choices=("fft", "direct"), default=None,
                        help="convolution backend override")

    sp = sub.add_parser("run", help="integrate a single path")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("ensemble", help="Monte-Carlo ensemble of paths")
    common(sp)
    sp.add_argument("--paths", type=int, default=8, help="number of paths")
    sp.add_argument("--workers", type=int, default=None, help="worker threads")
    sp.add_argument("--keep-paths", action="store_true",
                    help="retain per-path series and snapshots")
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("galerkin", help="spectral cross-check solver")
    common(sp)
    sp.add_argument("--modes", type=int, default=16, help="modes per axis")
    sp.add_argument("--epsilon", type=float, default=None,
                    help="diffusion regularization (default 1/modes^2)")
    sp.set_defaults(func=cmd_galerkin)

    sp = sub.add_parser("convergence", help="refinement study")
    sp.add_argument("--mode", choices=("heat", "time"), default="heat")
    sp.add_argument("--resolutions", type=int, nargs="*", default=None)
    sp.add_argument("--out-dir", default=None)
    sp.set_defaults(func=cmd_convergence)

    sp = sub.add_parser("figs", help="regenerate the standard figure set")
    sp.add_argument("--nx", type=int, default=65, help="nodes per axis")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--variant", choices=("printed", "symmetrized", "both"),
                    default="printed", help="three-bump initial data variant")
    sp.add_argument("--out-dir", default=None)
    sp.add_argument("--backend", choices=("fft", "direct"), default=None)
    sp.set_defaults(func=cmd_figs)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, SpecValidationError, StabilityError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EnsembleFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BLOWUP


cli_main = main  # canonical alias


if __name__ == "__main__":
    sys.exit(main())
