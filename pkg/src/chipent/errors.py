"""Exception types shared across the package."""


class ChipentError(Exception):
    """Base class for all package errors."""


class OutOfRangeError(ChipentError, ValueError):
    """A wavelength or index falls outside the modelled range."""


class ConfigError(ChipentError, ValueError):
    """Invalid or inconsistent experiment configuration."""


class RegimeError(ChipentError, ValueError):
    """A physical precondition (interferometer regime, scan span, ...) is violated."""


class FitError(ChipentError, RuntimeError):
    """The fringe fit did not converge."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class EmptyHistogramError(ChipentError, ValueError):
    """Histogram has no counts to analyse."""


class UnsortedStreamError(ChipentError, ValueError):
    """A time-tag stream is not sorted in non-decreasing order."""
