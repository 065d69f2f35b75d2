"""Exception types raised by bisurf."""


class BisurfError(Exception):
    """Base class for all package errors."""


class GridError(BisurfError, ValueError):
    """Invalid domain geometry or grid construction."""


class OutsideDomainError(BisurfError, ValueError):
    """A point lies in the Outside region of a grid."""


class ForwardProblemError(BisurfError):
    """The forward biharmonic problem cannot be solved uniquely."""


class InfeasibleError(BisurfError):
    """The load-fit constraint set has no point inside the weight box.

    ``violated`` lists labels of the constraints that could not be met.
    """

    def __init__(self, message, violated=()):
        super().__init__(message)
        self.violated = list(violated)


class LCurveError(BisurfError):
    """Too few usable points to locate an L-curve corner."""


class FormatError(BisurfError, ValueError):
    """Malformed input file."""
