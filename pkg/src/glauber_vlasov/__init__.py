"""Continuum Glauber dynamics: correlation hierarchies, Vlasov limit and particle simulation."""

from .grid import Grid
from .potential import Potential, PotentialConstants, compute_constants, eval_potential
from .config_space import Configuration, GridFunctionFamily, NormParams, norm_kc, norm_lc
from .hierarchy import ScalingRegime
from .vlasov import DensityField, SolverSettings, solve_kirkwood_monroe, solve_vlasov
from .glauber_sim import estimate_correlations, simulate, simulate_ensemble
from .config import ConfigError, ExperimentConfig, default_config, load_config, validate_config

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "Potential",
    "PotentialConstants",
    "compute_constants",
    "eval_potential",
    "Configuration",
    "GridFunctionFamily",
    "NormParams",
    "norm_kc",
    "norm_lc",
    "ScalingRegime",
    "DensityField",
    "SolverSettings",
    "solve_vlasov",
    "solve_kirkwood_monroe",
    "simulate",
    "simulate_ensemble",
    "estimate_correlations",
    "ConfigError",
    "ExperimentConfig",
    "default_config",
    "load_config",
    "validate_config",
]
