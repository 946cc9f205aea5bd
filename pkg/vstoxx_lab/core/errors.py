"""Exception hierarchy.

Every error carries the exit code the CLI reports for its family:
2 validation, 3 data, 4 numerical failure.
"""

from typing import Any, Optional


class VstoxxLabError(Exception):
    exit_code = 1


class InputValidationError(VstoxxLabError):
    exit_code = 2


class DomainError(InputValidationError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DataError(VstoxxLabError):
    exit_code = 3


class SchemaError(DataError):
    def __init__(self, file: str, line: int, column: str, detail: str):
        self.file = file
        self.line = line
        self.column = column
        super().__init__(f"{file}:{line}: column '{column}': {detail}")


class DuplicateKeyError(DataError):
    pass


class MissingDataError(DataError):
    pass


class NoExpiryError(DataError):
    pass


class EmptySliceError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class ConstantColumnError(DataError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"Column '{column}' is constant; standard deviation is zero")


class NumericalError(VstoxxLabError):
    exit_code = 4


class NoSolutionError(NumericalError):
    pass


class IntegrationError(NumericalError):
    pass


class NonFiniteIntegrandError(NumericalError):
    pass


class PricingError(NumericalError):
    def __init__(self, message: str, strike: Optional[float] = None):
        self.strike = strike
        super().__init__(message if strike is None else f"{message} (strike={strike})")


class LassoConvergenceError(NumericalError):
    def __init__(self, message: str, last_iterate: Any = None):
        self.last_iterate = last_iterate
        super().__init__(message)


class UndefinedShrinkageError(NumericalError):
    pass


class DegenerateFoldError(NumericalError):
    pass


class UndefinedScoreError(NumericalError):
    pass
