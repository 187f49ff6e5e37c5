"""Exception types shared across the package."""


class FimatchError(Exception):
    """Base class for all package-specific errors."""


class SingularMatrixError(FimatchError):
    """A normal-equations matrix is numerically rank deficient.

    ``pivot`` is the zero-based index of the offending Cholesky pivot.
    """

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class NonConvergenceError(FimatchError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class EvaluationError(FimatchError):
    """A user-supplied function returned a non-finite value."""


class WeakInstrumentError(FimatchError):
    """The first-stage instrument coefficients are indistinguishable from zero."""


class DegenerateModelError(FimatchError):
    """A fitted model is degenerate (for example zero residual variance)."""


class DegenerateRecipientError(FimatchError):
    """Every fractional-weight kernel vanished for one recipient."""

    def __init__(self, message: str, unit_id: str | None = None):
        super().__init__(message)
        self.unit_id = unit_id


class CsvFormatError(FimatchError):
    """A CSV input failed validation; carries row/column location when known."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column
