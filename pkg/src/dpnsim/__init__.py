"""Round-based simulator of a request-grant digital power network."""

from .core import (
    AllocationPolicy,
    ConfigError,
    DemandParams,
    GaParams,
    GridConfig,
    RngStreams,
    SolarConfig,
    StorageConfig,
    load_config,
    validate_config,
)
from .simulation import run_experiment, run_simulation

__version__ = "0.1.0"
