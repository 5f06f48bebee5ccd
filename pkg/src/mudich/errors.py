"""Exception types shared across the package."""


class MudichError(Exception):
    """Base class for all package errors."""


class GrowthRateError(MudichError, ValueError):
    """A growth rate violates positivity, monotonicity or normalisation."""


class HorizonError(MudichError, IndexError):
    """A query reaches beyond the finite horizon of a computation.

    Attributes
    ----------
    largest : int or None
        Largest index that can still be served.
    """

    def __init__(self, message, largest=None):
        super().__init__(message)
        self.largest = largest


class NonFiniteError(MudichError, ArithmeticError):
    """A matrix product produced inf or nan entries."""


class SingularRestrictionError(MudichError, ArithmeticError):
    """An operator restricted to a kernel is not invertible."""


class ContractionError(MudichError, ArithmeticError):
    """A fixed-point iteration is not contracting.

    Attributes
    ----------
    factor : float
        Measured contraction factor (>= 1 means failure).
    """

    def __init__(self, message, factor=float("nan")):
        super().__init__(message)
        self.factor = factor


class ConditionError(MudichError, ArithmeticError):
    """A matrix is too ill-conditioned for the requested operation."""


class ScenarioError(MudichError, ValueError):
    """A scenario file failed validation.

    Attributes
    ----------
    path : str
        Dotted path of the offending field.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
