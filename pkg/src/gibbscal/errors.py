"""Exception hierarchy used across the package."""


class CalibrationError(Exception):
    """Base class for all errors raised by gibbscal."""


class StructuralError(CalibrationError, ValueError):
    """Shapes or dimensions of inputs do not line up."""


class DomainError(CalibrationError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(CalibrationError, ValueError):
    """A run or algorithm configuration is invalid."""


class InitializationError(CalibrationError, RuntimeError):
    """A sampler could not find a finite starting point."""


class OptimizationError(CalibrationError, RuntimeError):
    """Every optimizer restart failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class ConditioningError(CalibrationError, ArithmeticError):
    """A matrix was too ill-conditioned to factor or invert."""


class PrecisionError(CalibrationError, ValueError):
    """Too few Monte Carlo draws for the requested summary."""


class TuningError(CalibrationError, RuntimeError):
    """Loss-scale selection failed."""
