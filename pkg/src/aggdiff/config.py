"""Run configuration files and the run manifest.

Configs are flat INI files with fixed sections ``model``, ``grid``,
``time``, ``noise`` and ``output``.  Unknown sections or keys are errors;
duplicate keys are errors; every omitted key falls back to a recorded
default.  ``dt`` accepts either a number or the literals ``auto``,
``auto/2``, ``auto/4``, ``auto/8``: the automatic forms take the parabolic
stability bound (divided accordingly) and then snap down so the step
divides the recording gaps exactly.

The run manifest is a JSON file written after a successful run.  It echoes
every resolved value (so ``dt = auto`` becomes the actual number used),
records per-key provenance (user/cli/default), seeds, backend and code
versions.  A manifest can be passed wherever a config is accepted;
re-running from it reproduces the outputs byte for byte on the same
platform.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__
from .grid import Grid2D
from .model import ModelSpec
from .noise import GENERATOR_VERSION
from .stepper import RunConfig, snap_dt, stability_dt_max


class ConfigError(ValueError):
    def __init__(self, message: str, section: str = "", key: str = "",
                 line: Optional[int] = None):
        ctx = []
        if section or key:
            ctx.append(f"key [{section}] {key}".rstrip())
        if line is not None:
            ctx.append(f"line {line}")
        suffix = f" ({', '.join(ctx)})" if ctx else ""
        super().__init__(message + suffix)
        self.section, self.key, self.line = section, key, line


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {s!r}")


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in s.replace(",", " ").split())


def _parse_int_pair(s: str) -> tuple[int, int]:
    toks = s.replace(",", " ").split()
    if len(toks) != 2:
        raise ValueError(f"expected two integers, got {s!r}")
    return (int(toks[0]), int(toks[1]))


def _parse_optional_float(s: str):
    return None if s.strip().lower() == "none" else float(s)


def _parse_optional_str(s: str):
    return None if s.strip().lower() == "none" else s.strip()


# section -> key -> (ModelSpec/RunConfig field or special name, parser)
_SCHEMA = {
    "model": {
        "ubar": ("ubar", float),
        "alpha": ("alpha", float),
        "mu": ("mu", float),
        "trunc_m": ("trunc_m", _parse_optional_float),
        "diffusion": ("diffusion_kind", str),
        "a0": ("a0", float),
        "noise": ("noise_kind", str),
        "noise_amplitude": ("noise_amplitude", float),
        "kernel": ("kernel_kind", str),
        "kernel_normalizer": ("kernel_normalizer", str),
        "kernel_cutoff": ("kernel_cutoff", _parse_optional_float),
        "init": ("init_kind", str),
        "cosine_mode": ("cosine_mode", _parse_int_pair),
        "cosine_amplitude": ("cosine_amplitude", float),
        "cosine_offset": ("cosine_offset", float),
        "constant_value": ("constant_value", float),
        "table_path": ("table_path", _parse_optional_str),
        "perturb_delta": ("perturb_delta", float),
        "perturb_margin": ("perturb_margin", float),
    },
    "grid": {
        "nx": ("nx", int),
        "ny": ("ny", int),
        "xmin": ("xmin", float),
        "xmax": ("xmax", float),
        "ymin": ("ymin", float),
        "ymax": ("ymax", float),
    },
    "time": {
        "t_final": ("t_final", float),
        "dt": ("dt", str),  # number or auto form; resolved later
        "record_times": ("record_times", _parse_float_list),
        "record_count": ("record_count", int),
        "stability": ("stability_mode", str),
        "clip": ("clip_mode", str),
        "backend": ("conv_backend", str),
    },
    "noise": {
        "seed": ("seed", int),
        "white_noise_scaling": ("white_noise_scaling", _parse_bool),
        "monitor_tol": ("monitor_tol", float),
        "nu": ("nu", float),
        "sup_every_step": ("sup_every_step", _parse_bool),
        "q0": ("q0", int),
    },
    "output": {
        "snapshots": ("snapshots", _parse_bool),
        "pgm": ("pgm", _parse_bool),
        "figures": ("figures", _parse_bool),
    },
}

_REQUIRED = (("model", "ubar"), ("grid", "nx"), ("grid", "ny"),
             ("time", "t_final"), ("time", "dt"))


@dataclass(frozen=True)
class OutputOptions:
    snapshots: bool = True
    pgm: bool = True
    figures: bool = True


@dataclass
class ParsedConfig:
    spec: ModelSpec
    grid: Grid2D
    run: RunConfig
    output: OutputOptions
    echo: dict  # section -> key -> resolved string value
    provenance: dict  # "section.key" -> user | cli | default
    dt_request: str


def _find_line(text: str, key: str) -> Optional[int]:
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith(key) and "=" in stripped:
            name = stripped.split("=", 1)[0].strip()
            if name == key:
                return n
    return None


def _raw_sections_from_ini(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"duplicate key {e.option!r}", section=e.section,
                          key=e.option, line=e.lineno) from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _raw_sections(path) -> tuple[dict, str]:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):  # a run manifest
        manifest = json.loads(text)
        cfg = manifest.get("config")
        if not isinstance(cfg, dict):
            raise ConfigError(f"{path}: manifest carries no config block")
        return ({s: {k: str(v) for k, v in kv.items()} for s, kv in cfg.items()}, "")
    return (_raw_sections_from_ini(text), text)


def resolve_config(raw: dict, text: str = "", cli_overrides: Optional[dict] = None) -> ParsedConfig:
    """Validate raw section/key strings and build the typed objects.

    ``cli_overrides`` maps (section, key) to a replacement string value and
    marks those keys with provenance "cli".
    """
    provenance: dict[str, str] = {}
    values: dict[str, dict] = {s: {} for s in _SCHEMA}

    for section, kv in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section=section)
        for key, sval in kv.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r}", section=section, key=key,
                                  line=_find_line(text, key))
            field, parser = _SCHEMA[section][key]
            try:
                values[section][field] = parser(sval)
            except ValueError as e:
                raise ConfigError(f"bad value for {key!r}: {e}", section=section,
                                  key=key, line=_find_line(text, key)) from e
            provenance[f"{section}.{key}"] = "user"

    for (section, key), sval in (cli_overrides or {}).items():
        field, parser = _SCHEMA[section][key]
        values[section][field] = parser(sval)
        provenance[f"{section}.{key}"] = "cli"

    for section, key in _REQUIRED:
        field = _SCHEMA[section][key][0]
        if field not in values[section]:
            raise ConfigError(f"missing required key {key!r}", section=section, key=key)

    try:
        spec = ModelSpec(**values["model"])
        grid = Grid2D(**values["grid"])
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e

    tvals = dict(values["time"])
    record_count = tvals.pop("record_count", None)
    record_times = tvals.pop("record_times", None)
    t_final = tvals["t_final"]
    if record_times is None:
        n_rec = record_count if record_count is not None else 5
        if n_rec < 2 and t_final > 0:
            raise ConfigError("record_count must be at least 2", "time", "record_count")
        record_times = tuple(np.linspace(0.0, t_final, n_rec)) if t_final > 0 else (0.0,)
    elif record_count is not None:
        raise ConfigError("record_times and record_count are mutually exclusive",
                          "time", "record_count")

    dt_request = str(tvals.pop("dt"))
    dt = _resolve_dt(dt_request, spec, grid, t_final, record_times)
    try:
        run = RunConfig(dt=dt, record_times=record_times, **tvals, **values["noise"])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    output = OutputOptions(**values["output"])

    echo = _echo(spec, grid, run, output)
    for skey in [f"{s}.{k}" for s in _SCHEMA for k in _SCHEMA[s]]:
        provenance.setdefault(skey, "default")
    return ParsedConfig(spec=spec, grid=grid, run=run, output=output, echo=echo,
                        provenance=provenance, dt_request=dt_request)


def _resolve_dt(request: str, spec: ModelSpec, grid: Grid2D, t_final: float,
                record_times: tuple[float, ...]) -> float:
    req = request.strip().lower()
    if not req.startswith("auto"):
        try:
            return float(request)
        except ValueError:
            raise ConfigError(f"dt must be a number or auto[/2|/4|/8], got {request!r}",
                              "time", "dt") from None
    divisor = 1.0
    if "/" in req:
        try:
            divisor = float(req.split("/", 1)[1])
        except ValueError:
            raise ConfigError(f"bad auto divisor in dt={request!r}", "time", "dt") from None
        if divisor <= 0:
            raise ConfigError(f"auto divisor must be positive in dt={request!r}", "time", "dt")
    bound = stability_dt_max(spec, grid) / divisor
    if not math.isfinite(bound):
        raise ConfigError("dt=auto needs a diffusive model (stability bound is infinite)",
                          "time", "dt")
    marks = sorted({0.0, t_final, *record_times})
    gaps = [b - a for a, b in zip(marks, marks[1:]) if b - a > 0]
    gap = min(gaps) if gaps else t_final
    if gap <= 0:
        return bound
    return snap_dt(gap, bound)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _echo(spec: ModelSpec, grid: Grid2D, run: RunConfig, output: OutputOptions) -> dict:
    return {
        "model": {
            "ubar": _fmt(spec.ubar), "alpha": _fmt(spec.alpha), "mu": _fmt(spec.mu),
            "trunc_m": _fmt(spec.resolved_trunc_m()),
            "diffusion": spec.diffusion_kind, "a0": _fmt(spec.a0),
            "noise": spec.noise_kind, "noise_amplitude": _fmt(spec.noise_amplitude),
            "kernel": spec.kernel_kind, "kernel_normalizer": spec.kernel_normalizer,
            "kernel_cutoff": _fmt(spec.kernel_cutoff),
            "init": spec.init_kind, "cosine_mode": _fmt(spec.cosine_mode),
            "cosine_amplitude": _fmt(spec.cosine_amplitude),
            "cosine_offset": _fmt(spec.cosine_offset),
            "constant_value": _fmt(spec.constant_value),
            "table_path": _fmt(spec.table_path),
            "perturb_delta": _fmt(spec.perturb_delta),
            "perturb_margin": _fmt(spec.perturb_margin),
        },
        "grid": {
            "nx": str(grid.nx), "ny": str(grid.ny),
            "xmin": _fmt(grid.xmin), "xmax": _fmt(grid.xmax),
            "ymin": _fmt(grid.ymin), "ymax": _fmt(grid.ymax),
        },
        "time": {
            "t_final": _fmt(run.t_final), "dt": _fmt(run.dt),
            "record_times": _fmt(run.record_times),
            "stability": run.stability_mode, "clip": run.clip_mode,
            "backend": run.conv_backend,
        },
        "noise": {
            "seed": str(run.seed),
            "white_noise_scaling": _fmt(run.white_noise_scaling),
            "monitor_tol": _fmt(run.monitor_tol), "nu": _fmt(run.nu),
            "sup_every_step": _fmt(run.sup_every_step), "q0": str(run.q0),
        },
        "output": {
            "snapshots": _fmt(output.snapshots), "pgm": _fmt(output.pgm),
            "figures": _fmt(output.figures),
        },
    }


def parse_config_full(path, cli_overrides: Optional[dict] = None) -> ParsedConfig:
    raw, text = _raw_sections(path)
    return resolve_config(raw, text, cli_overrides)


def parse_config(path) -> tuple[ModelSpec, Grid2D, RunConfig]:
    """Read a config (or manifest) file into the three typed objects."""
    parsed = parse_config_full(path)
    return parsed.spec, parsed.grid, parsed.run


MANIFEST_NOTES = {
    "initial_perturbation": "multiplicative: clamp(u0*(1 + delta*xi), 0, ubar - margin), "
                            "xi iid standard normal per node",
    "wiener_basis": "spectral solver identifies the Wiener coordinates with the "
                    "retained cosine eigenmodes",
}


def write_manifest(path, command: str, parsed: ParsedConfig, elapsed_seconds: float,
                   extras: Optional[dict] = None) -> dict:
    """Write the run manifest; its presence marks a completed run."""
    manifest = {
        "format": "aggdiff-manifest",
        "version": 1,
        "command": command,
        "code_version": __version__,
        "generator_version": GENERATOR_VERSION,
        "seed": parsed.run.seed,
        "backend": parsed.run.conv_backend,
        "dt_request": parsed.dt_request,
        "timing": {"elapsed_seconds": elapsed_seconds},
        "config": parsed.echo,
        "provenance": parsed.provenance,
        "notes": dict(MANIFEST_NOTES, **(extras or {})),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
