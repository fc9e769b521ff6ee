"""Simulation and analysis of an evolutionary market game with short-lived assets."""

from .core import MarketState, SimplexVector, make_simplex
from .engine import GameConfig, clear_market, game, simulate_path, step
from .errors import (
    CensoringExceeded,
    ConfigInvalid,
    MarketGameError,
    NumericalFailure,
)
from .payoffs import GrowthSpec, PathRng, RelativePayoffSpec
from .stopping import crossing_times, estimate_expected_tau, exact_expected_tau, ratio_curve
from .strategies import ConstantStrategy, CustomStrategy, LambdaStar, separated_strategy

__version__ = "0.1.0"

__all__ = [
    "CensoringExceeded", "ConfigInvalid", "ConstantStrategy", "CustomStrategy", "GameConfig",
    "GrowthSpec", "LambdaStar", "MarketGameError", "MarketState", "NumericalFailure", "PathRng",
    "RelativePayoffSpec", "SimplexVector", "clear_market", "crossing_times",
    "estimate_expected_tau", "exact_expected_tau", "game", "make_simplex", "ratio_curve",
    "separated_strategy", "simulate_path", "step",
]
