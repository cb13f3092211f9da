"""
Custom exceptions for the control lab services
"""
from typing import Any, Dict, Optional


class LabError(Exception):
    """Base exception for control lab errors"""

    def __init__(self, message: str, error_code: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details or {}


class ConfigurationError(LabError):
    """Configuration related errors"""
    pass


class ValidationError(LabError):
    """Input or precondition validation errors"""
    pass


class GridMismatchError(LabError):
    """Field and coefficients live on different grids"""
    pass


class GhostDataError(LabError):
    """Not enough cells next to a wall to build the one-sided stencils"""
    pass


class ConvergenceError(LabError):
    """Linear solve did not reach its tolerance"""

    def __init__(self, message: str, residual: Optional[float] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.residual = residual


class CFLViolationError(LabError):
    """Time step above the advective stability bound"""

    def __init__(self, message: str, dt_limit: Optional[float] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.dt_limit = dt_limit


class CompatibilityError(LabError):
    """Neumann problem data are not compatible"""
    pass


class FlushingError(LabError):
    """Reference flow does not flush the physical domain"""

    def __init__(self, message: str, slowest_trajectory: Any = None, **kwargs):
        super().__init__(message, **kwargs)
        self.slowest_trajectory = slowest_trajectory


class PartitionError(LabError):
    """Ball cover cannot be attached to control squares"""
    pass


class SupportLeakError(LabError):
    """Control leaked outside its admissible support"""
    pass


class MissingProfileError(LabError):
    """Expansion profile required by the selected mode is missing"""
    pass


class StagnationError(LabError):
    """Iterative solver stagnated"""
    pass


class NonContractionError(LabError):
    """Fixed-point iteration is not contracting"""
    pass


class StepFailure(LabError):
    """A strategy step missed its tolerance"""

    def __init__(self, message: str, step: str = "", **kwargs):
        super().__init__(message, **kwargs)
        self.step = step


def handle_numerical_error(error: Exception, operation: str = "unknown") -> LabError:
    """Convert generic numerical exceptions to lab errors"""

    if isinstance(error, LabError):
        return error

    error_message = str(error)
    error_type = type(error).__name__
    lowered = error_message.lower()

    if error_type == "LinAlgError" or "singular" in lowered:
        return ConvergenceError(f"{operation} linear algebra failure: {error_message}", error_code=error_type)

    elif "converge" in lowered or "tolerance" in lowered:
        return ConvergenceError(f"{operation} did not converge: {error_message}", error_code=error_type)

    elif isinstance(error, FloatingPointError) or "overflow" in lowered or "nan" in lowered:
        return ConvergenceError(f"{operation} produced non-finite values: {error_message}", error_code=error_type)

    elif isinstance(error, (ValueError, TypeError)) and ("shape" in lowered or "broadcast" in lowered):
        return GridMismatchError(f"{operation} shape mismatch: {error_message}", error_code=error_type)

    elif isinstance(error, (ValueError, TypeError, KeyError)):
        return ValidationError(f"{operation} invalid input: {error_message}", error_code=error_type)

    else:
        return LabError(f"{operation} error: {error_message}", error_code=error_type)
