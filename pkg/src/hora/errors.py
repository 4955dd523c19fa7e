"""Exception types shared across the package."""


class HoraError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(HoraError, ValueError):
    """An argument has the wrong shape, is non-finite, or is out of range."""


class InvalidConfigError(HoraError, ValueError):
    """A configuration violates a dimension or range invariant.

    ``key`` names the offending configuration field when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class OracleFailureError(HoraError, ArithmeticError):
    """A finite-difference oracle evaluated to a non-finite value."""


class GenerationFailureError(HoraError, RuntimeError):
    """Ground-truth rejection sampling exhausted its retry budget."""


class OptimizationFailureError(HoraError, RuntimeError):
    """Every restart of a least-squares fit produced a non-finite objective."""
