"""Exception types raised across the package."""


class SemigroupLabError(Exception):
    """Base class for all package errors."""


class DimensionError(SemigroupLabError, ValueError):
    pass


class InputError(SemigroupLabError, ValueError):
    """A precondition on the arguments was violated."""


class SingularityError(SemigroupLabError, ArithmeticError):
    """``I - h A`` could not be inverted."""

    def __init__(self, h, message=None):
        self.h = h
        super().__init__(message or f"I - h*A is singular for h={h!r}")


class ConvergenceError(SemigroupLabError, RuntimeError):
    def __init__(self, message, iterations=None, coordinates=None):
        self.iterations = iterations
        self.coordinates = coordinates
        super().__init__(message)


class ExtrapolationError(SemigroupLabError, RuntimeError):
    """Difference quotients stopped contracting while extrapolating to h=0."""


class FitError(SemigroupLabError, ValueError):
    pass


class ToleranceNotReached(SemigroupLabError, RuntimeError):
    def __init__(self, gap, tol, certificate=None):
        self.gap = gap
        self.tol = tol
        self.certificate = certificate
        super().__init__(f"refinement gap {gap:.3e} never fell below tol {tol:.3e}")


class FormatError(SemigroupLabError, ValueError):
    """A serialized matrix, report or config did not have the expected layout."""


class ConfigError(SemigroupLabError, ValueError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
