"""Exception hierarchy shared by every module."""

from __future__ import annotations


class CdlabError(Exception):
    """Base class for all library errors."""


class DimensionError(CdlabError, ValueError):
    """Operands live on different grids or have incompatible shapes."""


class PreconditionError(CdlabError, ValueError):
    """An operation was called with inputs violating its stated precondition."""


class AssemblyError(CdlabError, ValueError):
    """A coefficient sample fell outside its declared admissible range."""


class ParameterError(CdlabError, ValueError):
    """A scheme or regularizer parameter is out of range."""


class RangeError(CdlabError, OverflowError):
    """An exponential factor would overflow double precision."""


class DegenerateGeometryError(CdlabError, ValueError):
    """Point set is collinear or otherwise cannot be triangulated."""


class MeshInputError(CdlabError, ValueError):
    """Malformed mesh input such as duplicate points or a bad file."""


class MeshQualityError(CdlabError, ValueError):
    """A triangle is too thin for the finite volume operators to make sense."""


class SingularityError(CdlabError, ArithmeticError):
    """A direct solver met a zero pivot."""


class NonConvergenceError(CdlabError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class StepError(CdlabError, RuntimeError):
    """A time step failed; carries the step index and the underlying cause."""

    def __init__(self, step: int, cause: Exception) -> None:
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause


class UsageError(CdlabError, RuntimeError):
    """An API was called in an invalid state."""


class ConfigError(CdlabError, ValueError):
    """Configuration parse or validation error with a source location."""

    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        loc = f"line {line}, column {column}: " if line else ""
        super().__init__(f"{loc}{message}")
        self.message = message
        self.line = line
        self.column = column
