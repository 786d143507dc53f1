"""Sandpile density experiments on 1D lattices and complete graphs."""

__version__ = "0.1.0"

from .lattice import (
    EnvironmentSpec,
    HeightConfig,
    TopplingEnvironment,
    read_state,
    sample_config,
    sample_environment,
    validate_environment,
    write_state,
)
from .topology import Topology

__all__ = [
    "EnvironmentSpec",
    "HeightConfig",
    "Topology",
    "TopplingEnvironment",
    "read_state",
    "sample_config",
    "sample_environment",
    "validate_environment",
    "write_state",
    "__version__",
]
