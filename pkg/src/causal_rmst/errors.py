"""Exception and warning classes shared across the package."""


class RMSTError(Exception):
    """Base class for every error raised by :mod:`causal_rmst`."""


class ValidationError(RMSTError, ValueError):
    """Input data or configuration violates a documented contract."""


class NonFiniteValue(ValidationError):
    pass


class BadCode(ValidationError):
    pass


class NegativeTime(ValidationError):
    pass


class EmptyArm(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonPositiveTau(ValidationError):
    pass


class BadConfig(ValidationError):
    pass


class UnsupportedDGP(ValidationError):
    pass


class UnsupportedWeightMode(ValidationError):
    pass


class MissingNuisance(ValidationError):
    """An estimator was asked to run without a nuisance model it requires."""


class FitError(RMSTError, ArithmeticError):
    """A nuisance model could not be fitted."""


class Singular(FitError):
    pass


class NoConverge(FitError):
    pass


class NoEvents(FitError):
    pass


class TooManyFailures(RMSTError):
    pass


class ConvergenceWarning(UserWarning):
    """Fit finished but its diagnostics deserve attention."""


class SeparationWarning(ConvergenceWarning):
    pass


class MonotoneLikelihoodWarning(ConvergenceWarning):
    pass
