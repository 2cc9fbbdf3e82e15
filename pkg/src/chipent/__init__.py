"""Simulation and analysis chain for an on-chip entangled photon-pair source."""

from .errors import (ChipentError, ConfigError, EmptyHistogramError, FitError, OutOfRangeError,
                     RegimeError, UnsortedStreamError)

__version__ = "0.1.0"

__all__ = [
    "ChipentError",
    "ConfigError",
    "EmptyHistogramError",
    "FitError",
    "OutOfRangeError",
    "RegimeError",
    "UnsortedStreamError",
    "__version__",
]
