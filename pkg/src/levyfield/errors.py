"""Exception types shared across the package."""


class LevyFieldError(Exception):
    """Base class for all errors raised by this package."""


class NonConvergence(LevyFieldError):
    """Adaptive quadrature exhausted its subdivision budget.

    Carries the best estimate and its error bound so callers can decide
    whether to accept a degraded result.
    """

    def __init__(self, message, estimate=None, error_bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class OutOfSupport(LevyFieldError):
    """Density or mass function evaluated outside the support."""


class BudgetExceeded(LevyFieldError):
    """Simulation grid would exceed the configured cell budget."""


class DegenerateTail(LevyFieldError):
    """No joint exceedances above the requested quantile."""


class DivergentMoment(LevyFieldError):
    """A required exponential moment does not converge."""


class NonFiniteLikelihood(LevyFieldError):
    """Objective returned NaN/inf at a starting point."""


class AllStartsFailed(LevyFieldError):
    """Every optimizer start failed to produce a finite objective."""


class SingularHessian(LevyFieldError):
    """Numerical Hessian is singular; variance-based output unavailable."""


class SchemaError(LevyFieldError):
    """Input table is missing required columns or has malformed ones."""


class InconsistentCoordinates(LevyFieldError):
    """A site id appears with conflicting coordinates."""


class ParseError(LevyFieldError):
    """Malformed row in an input file. Carries the 1-based line number."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class ConfigError(LevyFieldError):
    """Run configuration is malformed, has unknown keys, or bad values."""


class EmptyBinWarning(UserWarning):
    """A covariogram distance bin received no site pairs."""
