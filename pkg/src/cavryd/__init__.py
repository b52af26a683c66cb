"""Simulation and analysis toolkit for a cavity-coupled Rydberg tweezer array."""

__version__ = "0.1.0"

from .core_types import (  # noqa: E402
    RB87,
    AtomSpecies,
    ConfigError,
    ExperimentConfig,
    TweezerArray,
    from_angular,
    load_config,
    to_angular,
    validate_config,
)

__all__ = [
    "__version__",
    "RB87",
    "AtomSpecies",
    "ConfigError",
    "ExperimentConfig",
    "TweezerArray",
    "from_angular",
    "load_config",
    "to_angular",
    "validate_config",
]
