"""Exception hierarchy shared across the package."""


class StsError(Exception):
    """Base class for all errors raised by stsgp."""


class ParameterDomainError(StsError, ValueError):
    """A hyperparameter lies outside its admissible domain."""


class GridError(StsError, ValueError):
    """A time grid is empty, non-finite, non-positive or not strictly increasing."""


class UnsupportedGridError(GridError):
    """The model cannot be evaluated on this grid (e.g. damped trend on uneven spacing)."""


class CompositionError(StsError, ValueError):
    """Parts of a composite model are inconsistent with each other."""


class DataError(StsError, ValueError):
    """Malformed input data."""


class NumericalFailure(StsError, ArithmeticError):
    """A linear-algebra step failed (Cholesky, non-positive innovation variance, ...)."""


class OptimizationFailure(StsError, RuntimeError):
    """Every optimizer restart failed; ``traces`` holds what each restart did."""

    def __init__(self, message, traces=()):
        super().__init__(message)
        self.traces = list(traces)
