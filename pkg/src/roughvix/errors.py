"""Exception types raised across the package."""


class RoughVixError(Exception):
    """Base class for all package errors."""


class DomainError(RoughVixError, ValueError):
    """An argument lies outside the domain of a formula."""


class NotPositiveDefinite(RoughVixError, ValueError):
    """A correlation triple does not yield a positive definite matrix."""


class ShapeMismatch(RoughVixError, ValueError):
    pass


class Nonconvergence(RoughVixError, ArithmeticError):
    """The Riccati solution left the finite range (blow-up)."""


class RankDeficient(RoughVixError, ValueError):
    """The regression design matrix lacks full column rank."""


class InvalidBudget(RoughVixError, ValueError):
    pass


class NoSolution(RoughVixError, ValueError):
    """An option price lies outside the no-arbitrage bounds."""


class ConfigError(RoughVixError, ValueError):
    """Invalid experiment configuration.

    ``field`` names the offending configuration entry when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
