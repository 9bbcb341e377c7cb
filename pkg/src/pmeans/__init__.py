"""Locate p-means of probability measures on compact symmetric spaces by
simulating a partial simulated annealing diffusion, validated against
brute-force grid oracles."""

__version__ = "0.1.0"

from .anneal import (
    AnnealState,
    EnsembleStats,
    RunConfig,
    Schedules,
    Trajectory,
    ensemble,
    next_jump_time,
    run,
    run_homogenized,
    sde_step,
    wilson_interval,
)
from .costs import GradientBound, SmoothedCost, grad_h, grad_power, h_cost, u_plain_smoothed, u_smoothed
from .empirics import empirical_p_mean, mean_process, uniqueness_probe
from .errors import (
    ConfigError,
    DomainError,
    NondifferentiableError,
    NumericalError,
    PMeansError,
)
from .landscape import (
    ElevationReport,
    ScalarField,
    elevation_constant,
    evaluate_field,
    gibbs_mass,
    minimizers,
    nodes_within,
)
from .manifolds import Circle, FlatTorus, Sphere, make_manifold
from .measures import DiscreteMeasure, SmoothedMeasure, load_measure_csv, uniform_empirical

__all__ = [
    "AnnealState",
    "Circle",
    "ConfigError",
    "DiscreteMeasure",
    "DomainError",
    "ElevationReport",
    "EnsembleStats",
    "FlatTorus",
    "GradientBound",
    "NondifferentiableError",
    "NumericalError",
    "PMeansError",
    "RunConfig",
    "ScalarField",
    "Schedules",
    "SmoothedCost",
    "SmoothedMeasure",
    "Sphere",
    "Trajectory",
    "elevation_constant",
    "empirical_p_mean",
    "ensemble",
    "evaluate_field",
    "gibbs_mass",
    "grad_h",
    "grad_power",
    "h_cost",
    "load_measure_csv",
    "make_manifold",
    "mean_process",
    "minimizers",
    "next_jump_time",
    "nodes_within",
    "run",
    "run_homogenized",
    "sde_step",
    "u_plain_smoothed",
    "u_smoothed",
    "uniform_empirical",
    "uniqueness_probe",
    "wilson_interval",
]
