"""Exception hierarchy.

Three families map onto the CLI exit codes: malformed input files
(:class:`ParseError`, exit 2), inputs that parse but violate a model
contract (:class:`ValidationError`, exit 3), and numerical procedures that
fail to deliver their guarantee (:class:`NumericalFailure`, exit 4).
"""


class LongRiskError(Exception):
    """Base class for all package errors."""


class ParseError(LongRiskError):
    """An input file could not be read or decoded."""


class ValidationError(LongRiskError, ValueError):
    """An input violates a documented precondition."""


class NumericalFailure(LongRiskError, ArithmeticError):
    """A numerical routine could not certify its result."""


# model construction
class DimensionMismatch(ValidationError):
    pass


class NonStochasticRow(ValidationError):
    pass


class NonPositiveSDF(ValidationError):
    pass


class NonPositiveGrowth(ValidationError):
    pass


class StateOutOfRange(ValidationError):
    pass


class NonPositiveCashFlow(ValidationError):
    pass


# chain structure
class ReducibleChain(ValidationError):
    pass


class ReducibleGrowthChain(ReducibleChain):
    pass


class PeriodicChain(ValidationError):
    pass


class NotRecurrent(ValidationError):
    pass


# horizons
class HorizonZero(ValidationError):
    pass


class HorizonOrder(ValidationError):
    pass


class HorizonTooShort(ValidationError):
    pass


class HorizonExceedsT(ValidationError):
    pass


# curves and yields
class CurveTooShort(ValidationError):
    pass


class NonPositivePrice(ValidationError):
    pass


class NotPowerDecay(ValidationError):
    pass


class MomentBoundsViolation(ValidationError):
    pass


# estimation
class EmptyBundle(ValidationError):
    pass


class NoConvergence(NumericalFailure):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InvalidSolution(NumericalFailure):
    pass


class NotStabilized(NumericalFailure):
    """Raised when a limit check is inconclusive; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InvalidPathWarning(UserWarning):
    """A path uses a transition with zero probability."""


class EnumerationTooLarge(UserWarning):
    """Exact enumeration skipped; Monte Carlo used instead."""
