"""Exception hierarchy shared across the package."""


class GCMError(Exception):
    """Base class for all errors raised by gcm."""


class DimensionMismatch(GCMError, ValueError):
    pass


class NotPositiveDefinite(GCMError, ValueError):
    pass


class NonPositiveV(GCMError, ValueError):
    pass


class RootFindingFailed(GCMError, RuntimeError):
    pass


class SingularDenominator(GCMError, ArithmeticError):
    pass


class DegenerateOverlap(GCMError, ValueError):
    """Raised when q <= 0 or rho*q - m**2 <= 0 where a Gaussian needs positive variance."""


class NegativeError(GCMError, ArithmeticError):
    pass


class DegenerateLabels(GCMError, ValueError):
    pass


class NoBracket(GCMError, RuntimeError):
    pass


class DenominatorNonPositive(GCMError, ArithmeticError):
    pass


class NegativeConditionalVariance(GCMError, ValueError):
    pass


class SolverBudgetExceeded(GCMError, RuntimeError):
    pass


class MismatchedGrids(GCMError, ValueError):
    pass


class ConfigError(GCMError, ValueError):
    pass
