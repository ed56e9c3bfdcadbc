"""Exception hierarchy shared across the package.

``ValidationError`` subclasses map to CLI exit code 2.
"""


class AbstractionError(Exception):
    """Base class for all package errors."""


class ValidationError(AbstractionError, ValueError):
    """Input violates a documented precondition or invariant."""


class CycleError(ValidationError):
    pass


class RangeError(ValidationError):
    pass


class DuplicateEdge(ValidationError):
    pass


class EmptyTarget(ValidationError):
    pass


class PartitionMismatch(ValidationError):
    pass


class UniverseMismatch(ValidationError):
    pass


class SizeError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NotSurjective(ValidationError):
    pass


class NotBijective(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class SingularMatrix(AbstractionError):
    pass


class InternalError(AbstractionError, RuntimeError):
    """An invariant guaranteed by theory was violated: a bug, never user error."""


class OptimizationError(AbstractionError):
    """Every restart of a fit diverged."""
