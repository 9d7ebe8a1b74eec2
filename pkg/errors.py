"""Exception hierarchy shared by the services and the task layer."""
from typing import Any, Dict, Optional


class FinslerError(Exception):
    """Base class; `witness` holds the input that triggered the failure."""

    code = "finsler-error"

    def __init__(self, message: str, witness: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.witness = witness or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "message": self.message, "witness": self.witness}


class InvalidInputError(FinslerError):
    code = "invalid-input"


class MetricInvalidError(FinslerError):
    code = "metric-invalid"


class DegenerateDirectionError(FinslerError):
    code = "degenerate-direction"


class PullbackDegenerateError(FinslerError):
    code = "pullback-degenerate"


class NoConvergenceError(FinslerError):
    code = "no-convergence"

    def __init__(self, message: str, residual: float, iterations: int,
                 witness: Optional[Dict[str, Any]] = None):
        super().__init__(message, witness)
        self.residual = float(residual)
        self.iterations = int(iterations)

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data.update({"residual": self.residual, "iterations": self.iterations})
        return data


class ConditioningError(FinslerError):
    code = "conditioning"


class NotBerwaldError(FinslerError):
    code = "not-berwald"


class ChartDegenerateError(FinslerError):
    code = "chart-degenerate"
