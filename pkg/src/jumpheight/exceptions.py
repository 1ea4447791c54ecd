"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`JumpHeightError`, and most also derive from the closest builtin so
callers can catch ``ValueError`` / ``KeyError`` where that reads better.
"""


class JumpHeightError(Exception):
    """Base class for all package errors."""


class UnitMismatchError(JumpHeightError, ValueError):
    pass


class ValidationError(JumpHeightError, ValueError):
    """A value violates a documented bound (confidence, rate, ...)."""


class FormatError(JumpHeightError, ValueError):
    """A file is structurally malformed (ragged rows, missing columns, empty)."""


class ParseError(FormatError):
    """A cell could not be parsed as a number."""

    def __init__(self, msg, row=None, column=None):
        super().__init__(msg)
        self.row = row
        self.column = column


class GapError(FormatError):
    """Frame indices are not contiguous."""

    def __init__(self, msg, missing=()):
        super().__init__(msg)
        self.missing = tuple(missing)


class NameLookupError(JumpHeightError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class LengthError(JumpHeightError, ValueError):
    """Series too short for the requested window."""


class AlignmentError(JumpHeightError, ValueError):
    """Series that must be sample-aligned have different lengths."""


class SegmentationError(JumpHeightError, ValueError):
    pass


class DegenerateRangeError(JumpHeightError, ValueError):
    """max == min, so a range-based normalisation is undefined."""


class CalibrationError(JumpHeightError, ValueError):
    pass


class SignalError(JumpHeightError, ValueError):
    """A force trace carries no loaded (stance) region."""


class NoFlightError(JumpHeightError, ValueError):
    pass


class NonPhysicalError(JumpHeightError, ValueError):
    pass


class PairingError(JumpHeightError, ValueError):
    pass


class InputError(JumpHeightError, ValueError):
    """Statistics input is incomplete (missing cells, too few targets)."""
