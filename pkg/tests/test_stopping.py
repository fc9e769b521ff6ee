import math

import numpy as np
import pytest
from scipy.optimize import brentq

from marketgame.analysis.bounds import TheoremBounds, lower_tau, upper_tau
from marketgame.engine import game, simulate_path
from marketgame.errors import CensoringExceeded, ConfigInvalid, DomainError
from marketgame.payoffs import GrowthSpec, PathRng, RelativePayoffSpec, example1_specs
from marketgame.stopping import (
    auto_horizon,
    crossing_time,
    crossing_times,
    estimate_expected_tau,
    exact_expected_tau,
    geometric_levels,
    ratio_curve,
    ratio_of_means,
    simulate_crossings,
)
from marketgame.strategies import ConstantStrategy, LambdaStar, copy_opponent


def symmetric_example1():
    growth, rel = example1_specs([0.6, 0.4], 1.2)
    return game([0.5, 0.5], [LambdaStar(), LambdaStar()], growth, rel)


def test_crossing_at_time_zero():
    path = simulate_path(symmetric_example1(), 5, PathRng(0))
    assert crossing_time(path, 0, 0.5) == 0
    assert crossing_time(path, 0, 0.4) == 0


@pytest.mark.parametrize("level", [0.7, 1.0, 3.0, 100.0, 12345.0])
def test_crossing_closed_form(level):
    path = simulate_path(symmetric_example1(), 200, PathRng(0))
    expected = math.ceil((math.log(level) - math.log(0.5)) / math.log(1.2))
    assert crossing_time(path, 0, level) == expected
    ct = crossing_times(path, level)
    assert ct.times[0] == ct.times[1] == expected and ct.censored == (False, False)


def test_censored_sentinel():
    path = simulate_path(symmetric_example1(), 5, PathRng(0))
    assert crossing_time(path, 0, 1e6) == math.inf


def test_deterministic_estimate_has_zero_se():
    est = estimate_expected_tau(symmetric_example1(), 0, 100.0, 100, seed=1)
    assert est.mean == math.ceil((math.log(100) - math.log(0.5)) / math.log(1.2))
    assert est.se == 0.0 and est.censored == 0


def test_random_relative_payoffs_with_identical_strategies():
    growth = GrowthSpec.constant(1.2)
    rel = RelativePayoffSpec.discrete([[1, 0], [0, 1]], [0.5, 0.5])
    cfg = game([1.0, 1.0], [LambdaStar(), LambdaStar()], growth, rel)
    est = estimate_expected_tau(cfg, 0, 1000.0, 200, seed=3)
    assert est.mean == math.ceil(math.log(1000.0) / math.log(1.2)) and est.se == 0.0


def test_tau_nondecreasing_in_level(two_point):
    levels = geometric_levels(10.0, 10.0, 4)
    tau = simulate_crossings(two_point, levels, 200, 5000, seed=2)
    assert np.all(np.diff(tau, axis=2) >= 0)


def test_workers_do_not_change_results(two_point):
    levels = [10.0, 1000.0]
    a = simulate_crossings(two_point, levels, 300, 3000, seed=9, workers=1)
    b = simulate_crossings(two_point, levels, 300, 3000, seed=9, workers=3)
    assert np.array_equal(a, b)


def test_history_rule_matches_fixed_rule(two_point):
    # copying a constant opponent reproduces the constant opponent from t = 2 on
    cfg = game([1, 1], [LambdaStar(), copy_opponent(0)], two_point.growth, two_point.relative)
    fixed = game([1, 1], [LambdaStar(), LambdaStar()], two_point.growth, two_point.relative)
    a = simulate_crossings(cfg, [50.0], 50, 2000, seed=4)
    b = simulate_crossings(fixed, [50.0], 50, 2000, seed=4)
    assert np.array_equal(a, b)


def test_censoring_raises(two_point):
    with pytest.raises(CensoringExceeded) as info:
        estimate_expected_tau(two_point, 1, 1e6, 100, horizon=20, seed=0)
    assert info.value.estimate.censored == 100


def test_needs_enough_paths(two_point):
    with pytest.raises(ConfigInvalid):
        estimate_expected_tau(two_point, 0, 10.0, 99)


def test_censoring_consistency(two_point):
    h = auto_horizon(two_point, 1e4)
    a = estimate_expected_tau(two_point, 0, 1e4, 2000, horizon=h, seed=5)
    b = estimate_expected_tau(two_point, 0, 1e4, 2000, horizon=2 * h, seed=5)
    assert abs(a.mean - b.mean) < a.se


def test_ratio_is_one_for_identical_opponent(two_point):
    cfg = game([1, 1], [LambdaStar(), LambdaStar()], two_point.growth, two_point.relative)
    curve = ratio_curve(cfg, [10.0, 100.0, 1000.0], 500, seed=0)
    assert np.all(curve.ratio == 1.0)
    assert curve.theorem2_rhs is None


def test_ratio_curve_requires_lambda_star_first(two_point):
    cfg = game([1, 1], [ConstantStrategy([0.8, 0.2]), LambdaStar()], two_point.growth,
               two_point.relative)
    with pytest.raises(ConfigInvalid):
        ratio_curve(cfg, [10.0], 100, seed=0)


def test_ratio_of_means():
    a = np.array([2.0, 4.0, 6.0, 8.0])
    r, se = ratio_of_means(a, a / 2)
    assert r == 2.0 and se == pytest.approx(0.0, abs=1e-15)
    gen = np.random.default_rng(0)
    x, y = gen.exponential(3, 400), gen.exponential(2, 400)
    r, se = ratio_of_means(x, y)
    boot = [x[i].mean() / y[i].mean() for i in gen.integers(0, 400, (2000, 400))]
    assert se == pytest.approx(np.std(boot), rel=0.15)


def test_exact_tree_against_plain_recursion():
    growth = GrowthSpec.constant(1.25)
    rel = RelativePayoffSpec.discrete([[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
    cfg = game([1.0, 1.0], [LambdaStar(), ConstantStrategy([0.8, 0.2])], growth, rel)

    def brute(y, t, prob):
        if y[1] >= 6.0:
            return t * prob, 0.0
        if t == 10:
            return 0.0, prob
        total, left = 0.0, 0.0
        for R in ([0.9, 0.1], [0.1, 0.9]):
            lam = [[0.5, 0.5], [0.8, 0.2]]
            w = sum(y) * 1.25
            new = [0.0, 0.0]
            for n in range(2):
                p = lam[0][n] * y[0] + lam[1][n] * y[1]
                for i in range(2):
                    new[i] += lam[i][n] * y[i] / p * R[n] * w
            a, b = brute(new, t + 1, prob * 0.5)
            total, left = total + a, left + b
        return total, left

    mean, left = brute([1.0, 1.0], 0, 1.0)
    ex = exact_expected_tau(cfg, 1, 6.0, 10)
    assert ex.mean == pytest.approx(mean, rel=1e-12)
    assert ex.unresolved == pytest.approx(left, abs=1e-15)


def test_lower_tau_examples():
    assert lower_tau(2.0, 2.0, 0.3) == 0.0
    assert lower_tau(1e6, 2.0, math.log(1.2)) == pytest.approx(71.97, abs=0.005)
    with pytest.raises(DomainError):
        lower_tau(1.0, 2.0, 0.1)


def test_upper_tau_degenerate_sigma():
    theta, eps = 0.2, 0.5
    delta = eps * eps / 256
    rhs = math.log(100) + theta - math.log(1.0 * delta * eps)
    assert upper_tau(100, 1.0, theta, 0.0, delta, eps) == pytest.approx(rhs / theta, rel=1e-14)


def test_upper_tau_against_bisection():
    theta, sigma, eps = 0.18232, 0.0835, 0.5
    delta = eps ** 2 / 256
    rhs = math.log(1e6) + theta - math.log(1.0 * delta * eps)
    root = brentq(lambda x: theta * x - 2 * sigma * math.sqrt(x) - rhs, 1.0, 1e6, xtol=1e-13)
    up = upper_tau(1e6, 1.0, theta, sigma, delta, eps)
    assert up == pytest.approx(root, rel=1e-10)
    assert up == pytest.approx(128.99957096, abs=1e-6)  # frozen regression value
    assert lower_tau(1e6, 2.0, theta) <= up
    with pytest.raises(DomainError):
        upper_tau(1.0, 1.0, theta, sigma, delta, eps)


def test_theorem_bounds_for_game(two_point):
    b = TheoremBounds.for_game(two_point)
    assert b.delta == b.epsilon ** 2 / 256
    assert b.w0 == 2.0 and b.y0_1 == 1.0
    for level in geometric_levels(2.0, 10.0, 6):
        assert b.lower_tau(level) <= b.upper_tau(level)
    assert auto_horizon(two_point, 0.5) == 1
