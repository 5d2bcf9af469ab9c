"""Exception hierarchy.

Runtime errors (precondition or budget failures) map to CLI exit status 3,
configuration errors to exit status 2.
"""


class GWIError(Exception):
    """Base class for all package errors."""


class ConfigError(GWIError, ValueError):
    """Invalid configuration or law parameters; ``field`` names the culprit."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class RuntimeBudgetError(GWIError, RuntimeError):
    """A precondition or computational budget was violated at run time."""


class NotSubcritical(RuntimeBudgetError):
    pass


class NotFoundWithinBudget(RuntimeBudgetError):
    pass


class ExplosionGuard(RuntimeBudgetError):
    pass


class TruncationBudgetExceeded(RuntimeBudgetError):
    pass


class TruncationUnbounded(RuntimeBudgetError):
    pass


class InfiniteOffspringMean(RuntimeBudgetError):
    pass


class InfiniteImmigrationMean(RuntimeBudgetError):
    pass


class InfiniteImmigrationAlphaMoment(RuntimeBudgetError):
    pass


class SupportCapExceeded(RuntimeBudgetError):
    pass


class UnsupportedLaw(RuntimeBudgetError):
    pass


class InsufficientPositivePoints(RuntimeBudgetError):
    pass


class DegenerateSample(RuntimeBudgetError):
    pass


class CombinatorialBudgetExceeded(RuntimeBudgetError):
    pass
