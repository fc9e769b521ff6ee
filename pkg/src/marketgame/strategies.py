"""Investment strategies as rules over the observable market history."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import SimplexVector, l2_norm, make_simplex
from .errors import ConfigInvalid, FloorViolated, SeparationViolated
from .payoffs import PayoffStep, RelativePayoffSpec


class History:
    """What an investor may look at when choosing proportions for step ``t``.

    The engine owns the underlying lists and appends to them after every
    step; a ``History`` only exposes entries ``1 .. t-1``, so a rule cannot
    peek at the payoff it is about to receive.
    """

    __slots__ = ("t", "investor", "n_assets", "initial_wealths", "_proportions", "_payoffs")

    def __init__(self, t: int, investor: int, initial_wealths, n_assets: int,
                 proportions: list, payoffs: list):
        self.t = t
        self.investor = investor
        self.n_assets = n_assets
        self.initial_wealths = np.asarray(initial_wealths, dtype=float)
        self._proportions = proportions
        self._payoffs = payoffs

    @property
    def proportions(self) -> list[np.ndarray]:
        """Realized M x N proportion matrices for steps 1 .. t-1."""
        return self._proportions[: self.t - 1]

    @property
    def payoffs(self) -> list[PayoffStep]:
        return self._payoffs[: self.t - 1]

    def last_proportions(self, investor: int) -> Optional[np.ndarray]:
        if self.t <= 1:
            return None
        return self._proportions[self.t - 2][investor]


class Strategy:
    kind = "abstract"

    def realize(self, history: History, rng: Optional[np.random.Generator] = None) -> SimplexVector:
        raise NotImplementedError

    def fixed_proportions(self) -> Optional[SimplexVector]:
        """The constant output if the rule ignores history, else ``None``."""
        return None

    def resolve(self, rel: RelativePayoffSpec) -> "Strategy":
        return self

    def to_dict(self) -> dict:
        raise ConfigInvalid(f"{type(self).__name__} has no config representation")


@dataclass(frozen=True)
class ConstantStrategy(Strategy):
    weights: SimplexVector
    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "weights", make_simplex(self.weights))

    def realize(self, history=None, rng=None) -> SimplexVector:
        return self.weights

    def fixed_proportions(self) -> SimplexVector:
        return self.weights

    def to_dict(self) -> dict:
        return {"kind": "constant", "weights": self.weights.tolist()}


@dataclass(frozen=True)
class LambdaStar(Strategy):
    """Invest proportionally to expected relative payoffs.

    Under i.i.d. relative payoffs the conditional mean is the constant
    E R_1, filled in by :meth:`resolve` from the payoff spec.
    """

    weights: Optional[SimplexVector] = None
    kind = "lambda_star"

    def realize(self, history=None, rng=None) -> SimplexVector:
        if self.weights is None:
            raise ValueError("lambda_star must be resolved against a payoff spec first")
        return self.weights

    def fixed_proportions(self):
        return self.weights

    def resolve(self, rel: RelativePayoffSpec) -> "LambdaStar":
        return LambdaStar(lambda_star(rel))

    def to_dict(self) -> dict:
        return {"kind": "lambda_star"}


@dataclass(frozen=True)
class SeparatedStrategy(ConstantStrategy):
    """Constant proportions kept at L2 distance >= ``a`` from lambda* and
    coordinatewise above ``floor``."""

    lambda_star: SimplexVector = None
    a: float = 0.0
    floor: float = 0.0
    kind = "separated"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "lambda_star", make_simplex(self.lambda_star))
        if self.a <= 0 or self.floor <= 0:
            raise ConfigInvalid("separation radius and floor must be positive")
        dist = l2_norm(np.asarray(self.weights) - np.asarray(self.lambda_star))
        if dist < self.a:
            raise SeparationViolated(f"||base - lambda*|| = {dist:.6g} < a = {self.a:.6g}")
        if self.weights.min() < self.floor:
            raise FloorViolated(f"min coordinate {self.weights.min():.6g} < floor {self.floor:.6g}")

    def realize(self, history=None, rng=None) -> SimplexVector:
        return self.weights

    def to_dict(self) -> dict:
        return {"kind": "separated", "base": self.weights.tolist(), "a": self.a, "floor": self.floor}


class CustomStrategy(Strategy):
    """Wraps ``rule(history, rng) -> nonnegative vector``.

    The rule must be a pure function of its arguments; randomized rules draw
    only from the generator they are handed.
    """

    kind = "custom"

    def __init__(self, rule: Callable, name: str = "custom"):
        self.rule = rule
        self.name = name

    def realize(self, history: History, rng=None) -> SimplexVector:
        return make_simplex(np.maximum(np.asarray(self.rule(history, rng), dtype=float), 0.0))

    def __repr__(self):
        return f"CustomStrategy({self.name})"


def lambda_star(rel: RelativePayoffSpec) -> SimplexVector:
    return rel.mean


def separated_strategy(base, lambda_star, a: float, eps_tilde: float) -> SeparatedStrategy:
    return SeparatedStrategy(make_simplex(base), lambda_star=make_simplex(lambda_star),
                             a=float(a), floor=float(eps_tilde))


def realize(strategy: Strategy, history: History, rng=None) -> SimplexVector:
    out = strategy.realize(history, rng)
    if not isinstance(out, SimplexVector):
        out = make_simplex(out)
    return out


def copy_opponent(opponent: int) -> CustomStrategy:
    """Echo another investor's previous proportions (uniform at t = 1)."""

    def rule(history: History, rng=None):
        last = history.last_proportions(opponent)
        if last is None:
            return np.ones(history.n_assets)
        return last

    return CustomStrategy(rule, name=f"copy_opponent({opponent})")


def strategy_from_dict(d: dict, rel: RelativePayoffSpec) -> Strategy:
    kind = d.get("kind")
    if kind == "lambda_star":
        return LambdaStar().resolve(rel)
    if kind == "constant":
        return ConstantStrategy(make_simplex(d["weights"]))
    if kind == "separated":
        return separated_strategy(d["base"], rel.mean, d["a"], d["floor"])
    raise ConfigInvalid(f"unknown strategy kind {kind!r}")
