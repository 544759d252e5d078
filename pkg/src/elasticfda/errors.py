"""Exception types raised across the package."""


class ElasticError(Exception):
    """Base class for package errors."""


class DomainError(ElasticError, ValueError):
    """Evaluation outside the domain of a sampled function."""


class GeometryError(ElasticError, ArithmeticError):
    """A sphere operation is undefined for the given points (e.g. antipodal log)."""


class ConvergenceError(ElasticError, RuntimeError):
    """An iterative solver hit its iteration cap.

    The last iterate is kept on ``result`` so callers can still use it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ParseError(ElasticError, ValueError):
    """Malformed functional-data file. ``row``/``column`` are 1-based when known."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(ElasticError, ArithmeticError):
    """A linear-algebra step failed (e.g. a covariance that is still singular)."""
