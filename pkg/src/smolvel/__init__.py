"""Velocity-dependent coagulation at desk scale.

A deterministic solver for the M-level coagulation system with
drift-diffusion velocities, the Monte Carlo particle system it
approximates, and the shared diagnostics connecting the two.
"""

from .collision import (
    CollisionOutput,
    DensitySet,
    collision_operator,
    gain_deposit,
    loss_field,
    nonlinearity_bound_ratio,
    stability_dt,
)
from .config import (
    ConfigError,
    GaussianComponent,
    InitSpec,
    OutputSpec,
    ParticleConfig,
    initial_density_set,
    parse_config,
)
from .diagnostics import DiagnosticsRow, compute_row, weighted_l1_distance
from .integrator import RunResult, SolverState, run, strang_step
from .ou import OUStepSpec, StepRefusedError, ou_step, ou_variance
from .params import (
    Params,
    VelocityGrid,
    WeightedNormSpec,
    build_grid,
    cross_section,
    stokes_coefficient,
    weighted_norm,
)
from .particles import (
    ParticleState,
    coagulation_sweep,
    em_step,
    empirical_density,
    run_particles,
    sample_initial,
)

__version__ = "0.1.0"

__all__ = [
    "CollisionOutput", "DensitySet", "collision_operator", "gain_deposit",
    "loss_field", "nonlinearity_bound_ratio", "stability_dt",
    "ConfigError", "GaussianComponent", "InitSpec", "OutputSpec",
    "ParticleConfig", "initial_density_set", "parse_config",
    "DiagnosticsRow", "compute_row", "weighted_l1_distance",
    "RunResult", "SolverState", "run", "strang_step",
    "OUStepSpec", "StepRefusedError", "ou_step", "ou_variance",
    "Params", "VelocityGrid", "WeightedNormSpec", "build_grid",
    "cross_section", "stokes_coefficient", "weighted_norm",
    "ParticleState", "coagulation_sweep", "em_step", "empirical_density",
    "run_particles", "sample_initial",
]
