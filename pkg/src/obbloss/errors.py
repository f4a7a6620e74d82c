"""Exception types shared across the package."""


class ObbLossError(Exception):
    """Base class for all errors raised by obbloss."""


class InvalidBoxError(ObbLossError, ValueError):
    """A box has a non-positive or non-finite extent, or a non-finite field."""


class InvalidArgumentError(ObbLossError, ValueError):
    pass


class DegenerateCovarianceError(ObbLossError, ArithmeticError):
    """A covariance matrix is not positive definite."""


class NumericalFailureError(ObbLossError, ArithmeticError):
    """A loss evaluated to a non-finite value."""


class DivergedError(NumericalFailureError):
    """Optimization produced a non-finite loss.

    The partial trace recorded up to the failure is kept on ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
