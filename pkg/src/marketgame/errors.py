"""Exception hierarchy for the market game package."""


class MarketGameError(Exception):
    """Base class for all package errors."""


class NonPositiveMass(MarketGameError, ValueError):
    """A vector cannot be normalized onto the simplex."""


class NonPositiveDrift(MarketGameError, ValueError):
    """The growth distribution has E ln(rho) <= 0."""


class SeparationViolated(MarketGameError, ValueError):
    pass


class FloorViolated(MarketGameError, ValueError):
    pass


class LinearDependence(MarketGameError, ValueError):
    """Relative payoff components are linearly dependent."""


class InfeasibleSeparation(MarketGameError, ValueError):
    """No point of the simplex lies at the requested distance from lambda*."""


class DomainError(MarketGameError, ValueError):
    pass


class CensoringExceeded(MarketGameError, RuntimeError):
    """Too many Monte Carlo paths failed to cross before the horizon."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class NumericalFailure(MarketGameError, ArithmeticError):
    pass


class ConfigInvalid(MarketGameError, ValueError):
    pass
