"""Opinion-dynamics market model: herding-driven option pricing and calibration."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    DivergentError,
    DomainError,
    HerdvolError,
    NoConvergenceError,
    NoImprovementError,
    OutOfBandError,
    ParseError,
    SingularPointError,
    UnknownPresetError,
    ValidationError,
)
from .params import ModelParams
from .population import PopulationState

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DivergentError",
    "DomainError",
    "HerdvolError",
    "ModelParams",
    "NoConvergenceError",
    "NoImprovementError",
    "OutOfBandError",
    "ParseError",
    "PopulationState",
    "SingularPointError",
    "UnknownPresetError",
    "ValidationError",
    "__version__",
]
