"""Exception hierarchy shared by all modules."""


class RwreError(Exception):
    """Base class for every error raised by this package."""


class ParameterDomainError(RwreError, ValueError):
    """A parameter point lies outside its family box, or a family is malformed."""


class ConfigError(RwreError, ValueError):
    """Invalid or incomplete run configuration."""


class DegenerateDataError(RwreError):
    """The criterion is -inf on every evaluated parameter point."""


class NonBallisticError(RwreError):
    """Partial sums did not converge; the walk is (empirically) not ballistic."""


class LyapunovOverflowError(RwreError, OverflowError):
    """Matrix entries overflowed; restrict the family box away from w_p1 = 0."""


class BudgetExceededError(RwreError):
    """The walk used its whole step budget before reaching the target.

    The partial :class:`~rwre21.walk.WalkRecord` is kept in ``record``.
    """

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


# errors that the command line maps to exit code 2
NUMERIC_ERRORS = (
    DegenerateDataError,
    NonBallisticError,
    LyapunovOverflowError,
    BudgetExceededError,
)
