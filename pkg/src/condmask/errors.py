"""Exception types raised by condmask.

Every error maps onto one stable CLI exit code (see ``condmask.cli``).
"""


class CondMaskError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(CondMaskError, ValueError):
    pass


class TooFewRowsError(CondMaskError, ValueError):
    pass


class DegenerateDataError(CondMaskError, ValueError):
    pass


class SeriesDivergenceError(CondMaskError, ValueError):
    """The swap probability leaves the series ratio outside the unit disc."""


class BracketFailureError(CondMaskError, RuntimeError):
    pass


class SwapErasesCorrelationError(CondMaskError, ValueError):
    """Raised when p = 1: every value is swapped, no covariance survives."""


class VarianceUnderflowError(CondMaskError, ValueError):
    pass


class BudgetError(CondMaskError, RuntimeError):
    """Requested work exceeds the configured compute budget."""
