"""Exception types shared across the package."""


class StemtuneError(Exception):
    """Base class for all package errors."""


class InvalidArgument(StemtuneError, ValueError):
    """An argument or configuration value violates its contract."""


class OutOfBoundsError(InvalidArgument):
    """An aberration state lies outside the configured search bounds."""

    def __init__(self, coefficient, value, lower, upper):
        self.coefficient = coefficient
        self.value = value
        self.lower = lower
        self.upper = upper
        super().__init__(
            f"{coefficient}={value!r} nm outside bounds [{lower}, {upper}]"
        )


class NumericalError(StemtuneError, ArithmeticError):
    """A factorization or other numerical routine failed."""


class SchemaError(StemtuneError):
    """A trajectory log or image dump does not match the expected schema."""
