"""Exception types raised across the package.

Everything derives from :class:`RepJSDError`, which is itself a ``ValueError``
so callers that only care about "bad input" can catch that.
"""


class RepJSDError(ValueError):
    pass


class NotSymmetric(RepJSDError):
    pass


class NotPositiveSemidefinite(RepJSDError):
    pass


class NoConvergence(RepJSDError):
    pass


class TraceNotUnit(RepJSDError):
    pass


class BadShape(RepJSDError):
    pass


class DimMismatch(RepJSDError):
    pass


class ShapeMismatch(RepJSDError):
    pass


class RowNotUnitNorm(RepJSDError):
    pass


class Unbalanced(RepJSDError):
    pass


class MissingInputMap(RepJSDError):
    pass


class TapeMismatch(RepJSDError):
    pass


class NonFinite(RepJSDError):
    """Raised when an optimisation run produces NaN/inf; carries the epoch."""

    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class TargetOutOfRange(RepJSDError):
    pass


class InsufficientData(RepJSDError):
    pass


class ParseError(RepJSDError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class RaggedRows(ParseError):
    pass
