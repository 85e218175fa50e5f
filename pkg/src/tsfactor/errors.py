"""Exception hierarchy used across the package.

Every error raised deliberately by this library derives from
:class:`TsfactorError`, so callers can catch one base class.  The
subclasses mark distinct failure categories; the command line maps each
category to a stable process exit code.
"""

from __future__ import annotations

__all__ = [
    "TsfactorError",
    "InvalidData",
    "InvalidLag",
    "InvalidConfig",
    "PreconditionViolated",
    "IllConditioned",
    "DegenerateSpectrum",
    "IngestError",
]


class TsfactorError(Exception):
    """Base class for all errors raised by this package."""


class InvalidData(TsfactorError):
    """Input array is malformed: wrong shape, too short, or non-finite."""


class InvalidLag(TsfactorError):
    """A lag or lag count is out of range for the sample size."""


class InvalidConfig(TsfactorError):
    """Configuration fields are individually or jointly inadmissible."""


class PreconditionViolated(TsfactorError):
    """An operation was called on data that skipped a required step."""


class IllConditioned(TsfactorError):
    """A matrix that must be inverted is numerically singular.

    ``q_effective`` reports the largest leading dimension that would
    still be admissible, so callers can retry with a smaller q instead
    of silently regularizing.
    """

    def __init__(self, message: str, q_effective: int | None = None):
        super().__init__(message)
        self.q_effective = q_effective


class DegenerateSpectrum(TsfactorError):
    """An eigenvalue ratio is undefined (zero denominator, no offset)."""


class IngestError(TsfactorError):
    """A CSV input could not be parsed; carries the offending location."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column
