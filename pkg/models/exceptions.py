"""
Exception hierarchy for the DP-ERM bench.

Every error raised on purpose by the bench derives from DpBenchError so the
harness can log and record a failing cell without swallowing programming
errors. Errors that describe bad input also derive from ValueError.
"""

from typing import Optional


class DpBenchError(Exception):
    """Base class for all bench errors."""


class DatasetParseError(DpBenchError, ValueError):
    """Raised when a dataset file cannot be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmptyDatasetError(DatasetParseError):
    """Raised when a stream contains no records."""

    def __init__(self, message: str = "empty dataset"):
        super().__init__(message)


class SplitError(DpBenchError, ValueError):
    """Raised when a train/test split would leave one side empty."""


class DimensionMismatchError(DpBenchError, ValueError):
    """Raised when parameter, row and dataset dimensions disagree."""


class UnsupportedOperationError(DpBenchError):
    """Raised when an objective does not support a requested operation."""


class InfeasibleBudgetError(DpBenchError):
    """Raised when no noise multiplier inside the search bracket meets a budget."""


class AccountingOverflowError(DpBenchError, ArithmeticError):
    """Raised when an RDP value is not finite even in log-space."""


class DivergenceError(DpBenchError, ArithmeticError):
    """Raised when an iterate stops being finite."""

    def __init__(self, step: int, norm: float):
        self.step = step
        self.norm = norm
        super().__init__(f"non-finite iterate at step {step} (norm={norm})")


class ConvergenceError(DpBenchError):
    """Raised when an iterative solver hits its iteration cap."""

    def __init__(self, message: str, iterations: int, gradient_norm: float):
        self.iterations = iterations
        self.gradient_norm = gradient_norm
        super().__init__(f"{message} after {iterations} iterations (gradient norm {gradient_norm:.3e})")


class EigensolverError(DpBenchError):
    """Raised when an eigensolver does not converge within its sweep cap."""
