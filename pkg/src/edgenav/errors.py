"""Exception hierarchy shared by all edgenav modules."""

from __future__ import annotations


class EdgeNavError(Exception):
    """Base class for every error raised by edgenav."""


class ValidationError(EdgeNavError, ValueError):
    """Input violates a documented invariant or precondition."""


class TraceFormatError(ValidationError):
    """A trace file could not be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OutOfRangeError(EdgeNavError, ValueError):
    """A time query falls outside the span covered by a trace."""


class UndefinedMetricError(EdgeNavError, ValueError):
    """A metric was requested over an empty window."""


class ServiceUnavailableError(EdgeNavError):
    """Offloading requested while the drone holds no edge cores."""


class ContractViolation(EdgeNavError, RuntimeError):
    """An object was used outside its lifecycle (stale cache, step after done)."""


class FitError(EdgeNavError, ValueError):
    """Regression samples are degenerate."""


class TrainingDivergedError(EdgeNavError, RuntimeError):
    """A loss or parameter became non-finite during training."""

    def __init__(self, message: str, diagnostics: dict | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}
