"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1,
numeric/usage/runtime problems exit 2.
"""


class ConfigurationError(ValueError):
    """Invalid configuration: bad key, bad value, or incompatible shapes/dims."""


class UsageError(RuntimeError):
    """An API was called in a way its contract forbids (e.g. a stale cache)."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite values."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a formula."""


class SearchIntervalError(RuntimeError):
    """A scalar search could not bracket an interior maximum.

    Carries the interval that was searched so callers can report it.
    """

    def __init__(self, message: str, lo: float, hi: float):
        super().__init__(message)
        self.lo = lo
        self.hi = hi
