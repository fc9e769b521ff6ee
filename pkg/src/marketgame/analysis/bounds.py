"""Closed-form bounds on expected crossing times."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from ..errors import DomainError, InfeasibleSeparation


def lower_tau(level: float, w0: float, theta: float) -> float:
    """Wald lower bound (ln l - ln W_0) / theta, valid for every investor."""
    if level < w0:
        raise DomainError(f"level {level} is below the initial total wealth {w0}")
    return (math.log(level) - math.log(w0)) / theta


def upper_tau(level: float, y0_1: float, theta: float, sigma: float,
              delta: float, epsilon: float) -> float:
    """Upper bound on E tau_l for an investor playing lambda*.

    Largest root x of  theta*x - 2*sigma*sqrt(x) = ln l + theta - ln(Y_0 delta eps).
    """
    if level <= y0_1:
        raise DomainError(f"level {level} must exceed the investor's initial wealth {y0_1}")
    rhs = math.log(level) + theta - math.log(y0_1 * delta * epsilon)
    root = (sigma + math.sqrt(sigma * sigma + theta * rhs)) / theta
    return root * root


def theorem2_rhs(f_a, theta: float) -> float:
    """1 - min(|f(a)|, theta) / theta; accepts a FofA or a plain number."""
    value = getattr(f_a, "value", f_a)
    if getattr(f_a, "feasible", True) is False:
        raise InfeasibleSeparation("f(a) is undefined for an empty feasible set")
    return 1.0 - min(abs(value), theta) / theta


@dataclass(frozen=True)
class TheoremBounds:
    theta: float
    sigma: float
    epsilon: float
    delta: float
    w0: float
    y0_1: float
    theorem2: Optional[float] = None

    @classmethod
    def for_game(cls, config, investor: int = 0, f_a=None) -> "TheoremBounds":
        theta, sigma = config.growth.theta, config.growth.sigma
        eps = config.relative.epsilon
        rhs = None if f_a is None else theorem2_rhs(f_a, theta)
        return cls(theta, sigma, eps, eps * eps / 256.0,
                   float(config.initial_wealths.sum()),
                   float(config.initial_wealths[investor]), rhs)

    def lower_tau(self, level: float) -> float:
        return lower_tau(level, self.w0, self.theta)

    def upper_tau(self, level: float) -> float:
        return upper_tau(level, self.y0_1, self.theta, self.sigma, self.delta, self.epsilon)
