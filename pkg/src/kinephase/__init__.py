"""Stochastic phase reduction of traveling pulses in a kinematic excitable medium."""

__version__ = "0.1.0"

from .errors import (
    AllTrialsFailed,
    ConfigError,
    DegeneratePulse,
    DomainError,
    Instability,
    InvalidSpec,
    KinephaseError,
    NoConvergence,
    NotDecayed,
    PulseCollapse,
)
from .model import ModelParams, NoiseProfileKind, Region
from .noise import NoiseKind, NoiseSpec, build_noise_spec, directions
from .phase import PhaseCoefficients, SolverConfig, predicted_stats, reduce
from .pulse import PulseSolution, solve_pulse
from .spde import EnsembleStats, SimConfig, run_ensemble

__all__ = [
    "__version__",
    "AllTrialsFailed",
    "ConfigError",
    "DegeneratePulse",
    "DomainError",
    "Instability",
    "InvalidSpec",
    "KinephaseError",
    "NoConvergence",
    "NotDecayed",
    "PulseCollapse",
    "ModelParams",
    "NoiseProfileKind",
    "Region",
    "NoiseKind",
    "NoiseSpec",
    "build_noise_spec",
    "directions",
    "PhaseCoefficients",
    "SolverConfig",
    "predicted_stats",
    "reduce",
    "PulseSolution",
    "solve_pulse",
    "EnsembleStats",
    "SimConfig",
    "run_ensemble",
]
