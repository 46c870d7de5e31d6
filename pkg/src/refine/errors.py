"""Exception hierarchy.

Errors fall in two families so the CLI can map them to exit codes:
``DataError`` (bad input, exit 2) and ``NumericalError`` (a linear system
that cannot be trusted, exit 3).
"""


class RefineError(Exception):
    """Base class for all package errors."""


class DataError(RefineError):
    pass


class NumericalError(RefineError):
    pass


class ShapeMismatch(DataError):
    pass


class NonFinite(DataError):
    pass


class InsufficientData(DataError):
    pass


class UnknownTimePoint(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class InvalidSpec(DataError):
    pass


class AllColumnsConstant(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class BaselineMissing(ParseError):
    pass


class SchemaMismatch(DataError):
    pass


class NoOutOfBag(DataError):
    pass


class RankDeficient(NumericalError):
    pass


class Singular(NumericalError):
    pass


class ZeroDiagonal(NumericalError):
    pass


class TimePointError(RefineError):
    """Wraps a per-time-point failure with the offending label."""

    def __init__(self, label, cause):
        self.label = label
        self.cause = cause
        super().__init__(f"time point {label!r}: {type(cause).__name__}: {cause}")
