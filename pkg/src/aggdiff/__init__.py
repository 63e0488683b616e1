"""Simulation engine for a stochastic aggregation-diffusion equation.

Density-dependent diffusion that vanishes at zero density and at the
saturation level, a nonlocal Gaussian attraction kernel, logistic growth,
and pointwise multiplicative noise, integrated with a conservative
finite-difference / extended Milstein scheme.  A spectral solver on the
Neumann cosine eigenbasis cross-checks the finite-difference path, and a
Monte-Carlo layer estimates expectation functionals over ensembles of
reproducible paths.
"""

__version__ = "0.1.0"

from .grid import Field, Grid2D, integrate, midpoint_avg, node_coords, norms
from .model import (
    ModelSpec,
    SpecValidationError,
    antiderivative_A,
    antiderivative_AA,
    diffusion_a,
    initial_condition,
    kernel_value,
    noise_sigma,
    noise_sigma_prime,
    perturb_initial,
    reaction_f,
    reaction_truncated,
    validate,
    validate_or_raise,
)
from .convolution import KernelTable, build_table, convolve_direct, convolve_fft
from .noise import RngStream, derive_stream, gaussian_field
from .stepper import (
    BlowUpError,
    BlowUpReport,
    FluxPair,
    PathResult,
    RunConfig,
    StabilityError,
    check_stability,
    compute_fluxes,
    divergence,
    milstein_step,
    run_path,
    stability_dt_max,
)
from .diagnostics import (
    DiagnosticsRow,
    bound_violation_report,
    count_clusters,
    evaluate_row,
    stampacchia_R,
)
from .galerkin import (
    GalerkinState,
    SpectralBasis,
    build_basis,
    galerkin_rhs,
    galerkin_step,
    initial_state,
    project,
    reconstruct,
    run_galerkin,
    sample_mode,
)
from .ensemble import EnsembleStats, mass_curve_compare, run_ensemble
from .config import ConfigError, parse_config, parse_config_full, write_manifest
from .snapshots import Snapshot, SnapshotError, read_snapshot, write_pgm, write_snapshot
