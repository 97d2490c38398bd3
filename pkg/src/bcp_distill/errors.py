"""Error types shared across the package.

The CLI maps these onto exit codes: ValidationError (and subclasses) -> 1,
NumericError -> 2, VerificationError -> 3.
"""


class BcpDistillError(Exception):
    """Base class for all package errors."""


class ValidationError(BcpDistillError):
    """Invalid parameters, preconditions, or configuration values."""


class ShapeError(ValidationError):
    """Dimension mismatch between arrays and the declared architecture."""


class ConfigError(ValidationError):
    """Malformed or incomplete experiment configuration."""


class NumericError(BcpDistillError):
    """Non-finite values encountered during computation.

    Carries the iteration index when raised from a training loop.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class VerificationError(BcpDistillError):
    """One or more verification checks failed."""
