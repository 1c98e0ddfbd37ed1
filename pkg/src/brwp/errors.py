"""Exception types shared across the package."""


class BrwpError(Exception):
    """Base class for all package errors."""


class UsageError(BrwpError, ValueError):
    """Invalid arguments passed to a library function."""


class ConfigError(BrwpError, ValueError):
    """Inconsistent sampler or experiment configuration."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors) if errors else [message]


class NumericError(BrwpError, ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, message, iteration=None, index=None):
        super().__init__(message)
        self.iteration = iteration
        self.index = index
