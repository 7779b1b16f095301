"""Degenerate p-Laplacian systems: grids and operators, Barenblatt profiles,
an explicit conservative solver, self-similar entropy diagnostics and a CLI."""

from .barenblatt import BarenblattProfile, profile_constant, profile_mass, similarity_exponents
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .core import Grid, MassVector, SystemParams, VectorField, l1_mass, system_gradient_norm
from .diagnostics import DiagnosticsReport
from .selfsim import entropy_H, entropy_Hhat, to_self_similar
from .solver import InitialPreset, SolverConfig, make_initial, run, run_lockstep, step

__all__ = [
    "BarenblattProfile",
    "ConfigError",
    "DiagnosticsReport",
    "Grid",
    "InitialPreset",
    "MassVector",
    "RunConfig",
    "SolverConfig",
    "SystemParams",
    "VectorField",
    "entropy_H",
    "entropy_Hhat",
    "l1_mass",
    "make_initial",
    "parse_config",
    "profile_constant",
    "profile_mass",
    "run",
    "run_lockstep",
    "serialize_config",
    "similarity_exponents",
    "step",
    "system_gradient_norm",
    "to_self_similar",
]
