"""Exception hierarchy shared by every gpatt module."""
from typing import List, Optional


class GPattError(Exception):
    """Base class for all domain errors."""


class BoundsError(GPattError, IndexError):
    pass


class DuplicatePointError(GPattError):
    pass


class OffGridError(GPattError):
    pass


class ParameterError(GPattError, ValueError):
    pass


class ShapeError(GPattError, ValueError):
    pass


class ContractViolation(GPattError):
    pass


class NumericalDegeneracyError(GPattError, ArithmeticError):
    pass


class ConvergenceError(GPattError):
    """Raised when an iterative solve exhausts its iteration budget."""

    def __init__(self, message: str, residual_history: Optional[List[float]] = None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class InitializationError(GPattError):
    pass


class TrainingError(GPattError):
    pass


class MetricError(GPattError, ValueError):
    pass


class SamplingError(GPattError):
    pass


class InputError(GPattError):
    pass
