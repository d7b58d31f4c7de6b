from typing import Any


class GardnerSolverError(Exception):
    """Base exception for solver, diagnostics and experiment errors."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        self.details = details or {}
        super().__init__(message)

    def __str__(self):
        base_message = super().__str__()
        if not self.details:
            return base_message
        rendered = ", ".join(f"{key}: {value}" for key, value in self.details.items())
        return f"{base_message} ({rendered})"


class DomainError(GardnerSolverError):
    """Exception for inputs outside the valid domain (zeta, h, x, grid)."""

    pass


class InitializationError(GardnerSolverError):
    """Exception for a singular system while building the initial coefficients."""

    pass


class ZeroPivotError(GardnerSolverError):
    """Raised by the banded solver when a pivot falls below tolerance."""

    def __init__(self, message: str, pivot_row: int, pivot: float):
        self.pivot_row = pivot_row
        self.pivot = pivot
        super().__init__(message, details={"pivot_row": pivot_row, "pivot": pivot})


class NumericalBreakdownError(GardnerSolverError):
    """Exception for a time step that could not be solved."""

    def __init__(
        self,
        message: str,
        step_index: int,
        pivot_row: int | None = None,
        pivot: float | None = None,
    ):
        self.step_index = step_index
        self.pivot_row = pivot_row
        self.pivot = pivot
        details: dict[str, Any] = {"step_index": step_index}
        if pivot_row is not None:
            details["pivot_row"] = pivot_row
        if pivot is not None:
            details["pivot"] = pivot
        super().__init__(message, details=details)


class UnsupportedDiagnosticError(GardnerSolverError):
    """Exception for diagnostics that need data the problem does not provide."""

    pass


class ConfigParseError(GardnerSolverError):
    """Exception for invalid run configuration documents."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        details: dict[str, Any] = {}
        if key is not None:
            details["key"] = key
        if line is not None:
            details["line"] = line
        super().__init__(message, details=details)


class ExpressionError(GardnerSolverError):
    """Exception for custom initial-condition expressions that cannot be compiled."""

    pass
