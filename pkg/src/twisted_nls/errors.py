"""Exception and warning types shared across the package."""


class TwistedNLSError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TwistedNLSError, ValueError):
    """Invalid model, nonlinearity or solver parameters."""


class UsageError(TwistedNLSError, ValueError):
    """An operation was called with incompatible arguments (e.g. basis mismatch)."""


class UnsupportedRegimeError(ConfigurationError):
    """The requested operation needs the critical regime n >= 2."""


class PreconditionError(TwistedNLSError, ValueError):
    """Exponents or data outside the range where an estimate applies."""


class BasisConstructionError(TwistedNLSError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NonConvergenceError(TwistedNLSError, RuntimeError):
    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class DivergenceError(NonConvergenceError):
    """Picard iteration stopped contracting."""


class SmallnessError(TwistedNLSError, RuntimeError):
    """No horizon in the search grid makes the free flow small enough."""


class TruncationOverflowWarning(UserWarning):
    """A ladder operator pushed coefficient mass past the spectral cutoff."""
