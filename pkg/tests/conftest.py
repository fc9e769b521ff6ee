import math

import numpy as np
import pytest

from marketgame.engine import game
from marketgame.payoffs import GrowthSpec, RelativePayoffSpec
from marketgame.strategies import ConstantStrategy, LambdaStar


def two_point_game(opponent=(0.8, 0.2), y0=(1.0, 1.0)):
    growth = GrowthSpec.discrete([1.1, 1.3], [0.5, 0.5])
    rel = RelativePayoffSpec.discrete([[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
    return game(y0, [LambdaStar(), ConstantStrategy(opponent)], growth, rel)


@pytest.fixture
def two_point():
    return two_point_game()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


LN12 = math.log(1.2)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
