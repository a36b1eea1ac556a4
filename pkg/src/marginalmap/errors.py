"""Exception types shared across the package."""


class MarginalMapError(Exception):
    """Base class for all package errors."""


class InvalidConfigurationError(MarginalMapError, ValueError):
    """A state index is outside its variable's domain."""


class ResourceLimitError(MarginalMapError):
    """An exact computation would enumerate more states than allowed."""

    def __init__(self, message, size=None, cap=None):
        super().__init__(message)
        self.size = size
        self.cap = cap


class ConsistencyError(MarginalMapError, ValueError):
    """Beliefs are not locally consistent."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class StructuralViolationError(MarginalMapError):
    """Beliefs assign zero mass where the model has positive probability."""


class ParseError(MarginalMapError, ValueError):
    """Malformed UAI-style token stream."""

    def __init__(self, message, token_index=None):
        if token_index is not None:
            message = f"{message} (token {token_index})"
        super().__init__(message)
        self.token_index = token_index


class StructureError(ParseError):
    """Token stream is well formed but tables do not match their scopes."""
