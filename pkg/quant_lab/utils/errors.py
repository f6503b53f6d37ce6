"""
Exception hierarchy for quant_lab.

Library code raises these; the command line translates them into exit codes.
"""


class QuantLabError(Exception):
    """Base class for every error raised by quant_lab."""

    exit_code = 2


class UsageError(QuantLabError):
    """The caller asked for something the inputs cannot support."""

    exit_code = 2


class NumericalError(QuantLabError):
    """A factorization or solve broke down numerically."""

    exit_code = 3


class DimensionMismatch(UsageError):
    pass


class InvalidLambda(UsageError, ValueError):
    pass


class NotPowerOfTwo(UsageError, ValueError):
    pass


class TraceMissing(UsageError):
    pass


class RankMismatch(UsageError):
    pass


class BudgetExceeded(UsageError):
    pass


class ParseError(UsageError):
    pass


class NonFiniteEntry(UsageError):
    pass


class DimensionHeaderMismatch(UsageError):
    pass


class NotPositiveDefinite(NumericalError):
    def __init__(self, message, suggested_lambda=None):
        if suggested_lambda is not None:
            message = f"{message}; try lambda >= {suggested_lambda:.6g} (0.01*||X||_F^2/N)"
        super().__init__(message)
        self.suggested_lambda = suggested_lambda
