"""Exception types raised by optlyap."""


class OptLyapError(Exception):
    """Base class for all package errors."""


class DimensionError(OptLyapError, ValueError):
    pass


class NotHermitianError(OptLyapError, ValueError):
    pass


class InvalidStateError(OptLyapError, ValueError):
    """A matrix failed the density-matrix checks (trace, Hermiticity, positivity)."""


class ImaginaryResidueError(OptLyapError, ValueError):
    """A quantity that must be real came out with a significant imaginary part."""


class IntegratorError(OptLyapError, RuntimeError):
    """Numerical propagation failed, e.g. trace drift beyond tolerance."""


class TruncationOverflowError(OptLyapError, RuntimeError):
    """Population leaked into the top levels of a truncated Fock space."""


class ConfigError(OptLyapError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
