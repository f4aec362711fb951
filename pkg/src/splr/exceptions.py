"""Exception hierarchy shared across the package."""


class SplrError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SplrError):
    """An input value violates a precondition (non-finite entries, bad range)."""


class ShapeMismatchError(SplrError):
    """Array dimensions are inconsistent with each other."""


class IngestionError(SplrError):
    """A CSV cell could not be parsed; carries 1-based row/column coordinates."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaError(SplrError):
    """Column typing is inconsistent or unsupported."""


class NumericDegeneracyError(SplrError):
    """A curvature value underflowed the configured floor; names the entry."""

    def __init__(self, message, entry=None):
        super().__init__(message)
        self.entry = entry


class ConvergenceError(SplrError):
    """An iterative solver hit its iteration cap; carries final diagnostics."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LineSearchStallError(SplrError):
    """Backtracking line search shrank the step below the stall floor."""


class InternalConsistencyError(SplrError):
    """A quantity violated an identity the algorithm guarantees; indicates a bug."""


class FitAbortedError(SplrError):
    """A fit died mid-run; carries the partial objective trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
