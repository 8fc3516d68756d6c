"""Critical branching random walks on Z^d: kernels, moments, Monte Carlo, clusters."""

from .config import RunConfig, parse_config, serialize_config
from .gw_analytics import BranchingParams, GWLaw, TailMode
from .lattice_kernel import (
    JumpDistribution,
    green_value,
    heat_kernel,
    heat_kernel_series,
    simple_random_walk,
    validate_jump_distribution,
)
from .mc_simulator import BACKEND, SimConfig, simulate_field, simulate_replicas

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BranchingParams",
    "GWLaw",
    "JumpDistribution",
    "RunConfig",
    "SimConfig",
    "TailMode",
    "green_value",
    "heat_kernel",
    "heat_kernel_series",
    "parse_config",
    "serialize_config",
    "simple_random_walk",
    "simulate_field",
    "simulate_replicas",
    "validate_jump_distribution",
]
