"""Exception types shared across the package.

Plain ``ValueError`` is raised for malformed arguments (wrong shapes,
non-positive scales, labels outside the allowed set) and ``OSError``
propagates unchanged for file problems.  Everything domain-specific
derives from :class:`ContactShapeError` so callers can catch one base.
"""

from __future__ import annotations


class ContactShapeError(Exception):
    """Base class for errors raised by this package."""


class UnsupportedShapeError(ContactShapeError):
    """An operation was asked for a shape kind it does not support."""


class NumericalError(ContactShapeError):
    """A linear-algebra or quadrature step failed.

    The message carries a diagnostic, typically a condition-number
    estimate of the offending matrix or the iteration at which the
    failure occurred.
    """


class DegenerateContactError(ContactShapeError):
    """A contact sample carries a zero acceleration vector, so no
    direction can be estimated for it."""


class EmptyEstimateError(ContactShapeError):
    """A surface estimate contains no points, so downstream metrics
    that average over the estimate are undefined."""


class NoOutliersError(ContactShapeError):
    """A detection metric was requested for a dataset that contains no
    flagged outliers."""


class FlightLogParseError(ContactShapeError):
    """A flight-log file could not be parsed.

    Parameters
    ----------
    message : str
        Description of the problem.
    line_number : int or None
        One-based line number of the offending row, when known.
    """

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number
