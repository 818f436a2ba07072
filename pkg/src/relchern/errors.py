"""Exception types shared across the package."""


class RelchernError(Exception):
    """Base class for all package errors."""


class DomainMismatchError(RelchernError):
    """An operand lives on the wrong domain or references an unknown axis."""


class DegreeError(RelchernError):
    """Form degree out of range for the requested operation."""


class ShapeError(RelchernError):
    """Matrix shapes of operands are incompatible."""


class SingularValueError(RelchernError):
    """A field that must be invertible is (nearly) singular somewhere."""

    def __init__(self, message, worst_node=None, smin=None):
        super().__init__(message)
        self.worst_node = worst_node
        self.smin = smin


class StabilizationError(RelchernError):
    """A field violates a required constant-beyond-node-range flag."""


class ConstraintError(RelchernError):
    """A relative cochain violates the constraints of its complex."""


class IndexUndeterminedError(RelchernError):
    """The guard-banded index oracle could not certify a spectral gap."""

    def __init__(self, message, gaps=None):
        super().__init__(message)
        self.gaps = gaps
