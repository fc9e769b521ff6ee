import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketgame.analysis.bounds import theorem2_rhs
from marketgame.analysis.diagnostics import (
    drift_test,
    exact_drift,
    first_exceedance,
    fixed_time,
    harvest_states,
    lemma1_check,
    lemma2_check,
    lemma2_exact,
    lemma2_exact_first_exceedance,
    log_growth,
    modified_share_path,
    survival_report,
)
from marketgame.analysis.separation import compute_f, max_separation
from marketgame.engine import game, simulate_path
from marketgame.errors import InfeasibleSeparation, LinearDependence
from marketgame.payoffs import GrowthSpec, PathRng, RelativePayoffSpec, example1_specs
from marketgame.strategies import ConstantStrategy, LambdaStar, separated_strategy

COIN = RelativePayoffSpec.discrete([[1, 0], [0, 1]], [0.5, 0.5])
SKEW = RelativePayoffSpec.discrete([[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
THREE = RelativePayoffSpec.discrete([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.2, 0.2, 0.6]],
                                    [0.3, 0.3, 0.4])


def grid_oracle_2(rel, a, n=10_000):
    """Max of g over 10^4 points spread over the feasible part of the segment.

    Both pieces of {s : |s - lam*_1| * sqrt(2) >= a} are gridded with their
    endpoints included.
    """
    c = float(rel.mean[0])
    h = a / math.sqrt(2)
    pieces = [(0.0, c - h), (c + h, 1.0)]
    s = np.concatenate([np.linspace(lo, hi, n // 2) for lo, hi in pieces if hi >= lo])
    lam = np.stack([s, 1 - s], axis=1)
    ls = np.asarray(rel.mean)
    pts, p = rel.support()
    with np.errstate(divide="ignore"):
        g = np.log((pts / ls) @ lam.T).T @ p
    return g.max()


def simplex_grid_3(k):
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    i, j = i[keep], j[keep]
    return np.stack([i, j, k - i - j], axis=1) / k


def test_f_closed_form():
    f = compute_f(COIN, 0.1)
    assert f.value == pytest.approx(0.5 * math.log(1 - 2 * 0.01), abs=1e-12)
    assert f.value == pytest.approx(-0.0101013, abs=1e-7)
    assert abs(f.value - grid_oracle_2(COIN, 0.1)) < 1e-6


def test_f_sentinel():
    assert max_separation([0.5, 0.5]) == pytest.approx(math.sqrt(0.5))
    for a in (1.5, 0.75):
        f = compute_f(COIN, a)
        assert not f.feasible and f.value == -1.0 and f.argmax is None
    with pytest.raises(InfeasibleSeparation):
        theorem2_rhs(compute_f(COIN, 1.5), 0.2)


def test_f_refuses_dependent_payoffs():
    with pytest.raises(LinearDependence):
        compute_f(RelativePayoffSpec.constant([0.6, 0.4]), 0.1)


@pytest.mark.parametrize("a", [0.05, 0.2, 0.3 * math.sqrt(2), 0.6])
def test_f_two_assets_against_grid(a):
    assert abs(compute_f(SKEW, a).value - grid_oracle_2(SKEW, a)) < 1e-6


@pytest.mark.parametrize("a", [0.05, 0.15, 0.3, 0.5])
def test_f_three_assets_against_grid(a):
    lam = simplex_grid_3(400)
    ls = np.asarray(THREE.mean)
    lam = lam[np.linalg.norm(lam - ls, axis=1) >= a]
    pts, p = THREE.support()
    with np.errstate(divide="ignore"):
        grid = (np.log((pts / ls) @ lam.T).T @ p).max()
    f = compute_f(THREE, a)
    assert abs(np.linalg.norm(f.argmax - ls) - a) < 1e-9
    assert f.argmax.min() >= 0 and abs(f.argmax.sum() - 1) < 1e-12
    assert f.value >= grid - 1e-9
    assert f.value - grid < 2e-4  # grid spacing 1/400


def test_f_monotone_and_negative():
    for rel in (SKEW, THREE, RelativePayoffSpec.dirichlet([2, 3, 4])):
        top = max_separation(rel.mean)
        radii = np.linspace(0.02, top * 0.99, 6)
        vals = [compute_f(rel, a, saa_samples=20_000).value for a in radii]
        assert all(v < 0 for v in vals)
        assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))


def test_f_saa_stability():
    rel = RelativePayoffSpec.dirichlet([2, 3, 4])
    small = compute_f(rel, 0.1, saa_samples=100_000, seed=1)
    big = compute_f(rel, 0.1, saa_samples=200_000, seed=1)
    assert small.saa_se > 0
    assert abs(small.value - big.value) < 3 * small.saa_se


def test_ratio_bound_rhs_examples():
    assert theorem2_rhs(-0.0101, math.log(1.2)) == pytest.approx(1 - 0.0101 / 0.18232, abs=1e-4)
    assert theorem2_rhs(-0.0101, math.log(1.2)) == pytest.approx(0.9446, abs=1e-4)
    assert theorem2_rhs(-0.5, 0.2) == 0.0
    assert theorem2_rhs(-1e-12, 0.2) == pytest.approx(1.0)
    rhs = theorem2_rhs(compute_f(COIN, 0.1), math.log(1.2))
    assert 0 <= rhs < 1


# ------------------------------------------------------- log-sum inequality


def test_log_sum_inequality_examples():
    lhs, rhs = lemma1_check([0.5, 0.5], [0.5, 0.5])
    assert lhs == 0 and rhs == 0
    lhs, rhs = lemma1_check([0.5, 0.5], [0.25, 0.75])
    assert lhs == pytest.approx(0.1438410362, abs=1e-9)
    assert rhs == pytest.approx(0.03125)
    lhs, rhs = lemma1_check([0.5, 0.5], [1.0, 1.0])
    assert lhs == pytest.approx(-math.log(2)) and rhs == pytest.approx(-math.log(2))


@settings(max_examples=300)
@given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=6).flatmap(
    lambda x: st.tuples(st.just(x), st.lists(st.floats(1e-6, 10.0), min_size=len(x), max_size=len(x)))))
def test_log_sum_inequality_property(xy):
    x, y = np.array(xy[0]), np.array(xy[1])
    x = x / x.sum()
    x = x / x.sum()
    lhs, rhs = lemma1_check(x, y)
    assert lhs - rhs >= -1e-12


# ----------------------------------------------------------------- drift


def test_drift_vanishes_for_identical_strategies():
    assert exact_drift([0.5, 0.5], [0.5, 0.5], 0.3, COIN) == 0.0
    assert exact_drift([0.5, 0.5], [0.8, 0.2], 1.0 - 1e-12, COIN) == pytest.approx(0.0, abs=1e-12)


def test_two_point_drift_exact():
    d = exact_drift([0.5, 0.5], [0.8, 0.2], 0.5, COIN)
    expected = 0.5 * math.log(0.5 / 0.65) + 0.5 * math.log(0.5 / 0.35)
    assert d == pytest.approx(expected, rel=1e-14)
    beta = 0.5 * np.array([0.5, 0.5]) + 0.5 * np.array([0.8, 0.2])
    assert d >= 0.25 * np.sum((np.array([0.5, 0.5]) - beta) ** 2)


def test_drift_log1p_form_matches_direct():
    R = np.array([[0.9, 0.1], [0.3, 0.7]])
    lam, lt, r = np.array([0.5, 0.5]), np.array([0.8, 0.2]), 0.3
    beta = r * lam + (1 - r) * lt
    direct = np.log((R * lam / beta).sum(axis=1))
    assert np.allclose(log_growth(lam, lt, r, R), direct, rtol=1e-14)


def test_drift_test_on_harvested_states(two_point):
    states = harvest_states(two_point, 40, 30, seed=3)
    assert len(states) == 40
    rep = drift_test(two_point, states, inner_samples=4000, seed=3)
    assert rep.passed
    assert np.all(rep.kl >= rep.lower_bound - 1e-15)


def test_harvested_state_matches_path(two_point):
    s = harvest_states(two_point, 3, 20, seed=8)
    for i, st_ in enumerate(s):
        path = simulate_path(two_point, st_.t, PathRng(8, i))
        assert st_.log_r == pytest.approx(path.log_shares[st_.t - 1, 0], rel=1e-14)
        assert np.allclose(st_.lam_other, [0.8, 0.2])


def test_opponent_is_supermartingale_everywhere():
    gen = np.random.default_rng(0)
    for _ in range(200):
        r = gen.uniform(0.01, 0.99)
        lt = gen.dirichlet([1, 1])
        assert exact_drift(lt, [0.5, 0.5], 1 - r, COIN) <= 1e-15


# ----------------------------------------------------------------- r'


def test_modified_shares_without_trigger():
    R = COIN.draw(np.random.default_rng(0), 100)
    ms = modified_share_path([0.5, 0.5], np.tile([0.6, 0.4], (100, 1)), R, 0.3, 0.5)
    assert not ms.fired.any()
    assert np.array_equal(ms.r, ms.r_prime)


def test_modified_shares_trigger_needs_small_share():
    R = COIN.draw(np.random.default_rng(1), 50)
    ms = modified_share_path([0.5, 0.5], np.tile([0.9, 0.1], (50, 1)), R, 0.6, 0.5)
    assert not ms.fired[0]


def test_modified_shares_fired_step():
    R = COIN.draw(np.random.default_rng(2), 300)
    eps = 0.5
    ms = modified_share_path([0.5, 0.5], np.tile([0.9, 0.1], (300, 1)), R, 0.2, eps)
    assert ms.fired.any()
    idx = np.nonzero(ms.fired)[0]
    expected = 1 + ms.delta * (1 - ms.r_prime[idx])
    assert np.allclose(ms.beta_norm[idx], expected, rtol=1e-12)
    assert np.all(np.log(ms.beta_norm[idx]) <= ms.delta)
    assert np.all(ms.r_prime <= ms.r * (1 + 1e-12))
    assert ms.delta == eps ** 2 / 256


def test_modified_share_drift_nonnegative():
    eps = 0.5
    delta = eps ** 2 / 256
    lam = np.array([0.5, 0.5])
    gen = np.random.default_rng(5)
    for _ in range(300):
        lt = gen.dirichlet([0.3, 0.3])
        rp = gen.uniform(1e-4, 0.5)
        fire = lt.min() <= eps / 2
        lt_p = lt + delta * lam if fire else lt
        d = exact_drift(lam, lt_p, rp, SKEW)
        assert d >= -1e-15


# ------------------------------------------------ stopped random walk bound


def test_stopped_walk_constant_stopping():
    g = GrowthSpec.discrete([1.1, 1.3], [0.5, 0.5])
    res = lemma2_check(g, fixed_time(1), 20_000, seed=0)
    assert res.mean_tau == 1.0
    assert abs(res.lhs - g.theta) < 3 * res.lhs_se
    assert res.passed
    ex, et = lemma2_exact(g, fixed_time(1))
    assert ex == pytest.approx(g.theta) and et == 1.0


def test_stopped_walk_degenerate_sigma():
    g = GrowthSpec.constant(1.2)
    res = lemma2_check(g, fixed_time(3), 1000, seed=0)
    assert res.lhs == pytest.approx(math.log(1.2), rel=1e-15)
    assert res.rhs == pytest.approx(math.log(1.2), rel=1e-15)


def test_stopped_walk_geometric_rule():
    g = GrowthSpec.discrete([1.1, 1.3], [0.5, 0.5])
    c = math.log(1.2)
    ex, et, rhs = lemma2_exact_first_exceedance(g, c)
    assert ex == pytest.approx(math.log(1.3)) and et == 2.0
    assert ex < rhs
    ex2, et2 = lemma2_exact(g, first_exceedance(c))
    assert ex2 == pytest.approx(ex, abs=1e-12) and et2 == pytest.approx(et, abs=1e-12)
    res = lemma2_check(g, first_exceedance(c), 50_000, seed=1)
    assert abs(res.mean_tau - 2.0) < 0.05 and res.passed


# ----------------------------------------------------------------- survival


def test_survival_identical_opponent(two_point):
    cfg = game([1.0, 3.0], [LambdaStar(), LambdaStar()], two_point.growth, two_point.relative)
    rep = survival_report(cfg, 20, 200, seed=0, c_grid=[0.1, 0.2, 0.24])
    assert np.allclose(rep.min_r, 0.25, rtol=1e-12)
    assert np.all(rep.path_compensator == 0)
    assert np.all(rep.eta == 0)


def test_survival_example1_monotone():
    growth, rel = example1_specs([0.6, 0.4], 1.2)
    cfg = game([0.5, 0.5], [LambdaStar(), ConstantStrategy([0.5, 0.5])], growth, rel)
    path = simulate_path(cfg, 300, PathRng(0))
    r = np.exp(path.log_shares[:, 0])
    assert np.all(np.diff(r) >= -1e-15)
    rep = survival_report(cfg, 1, 300, seed=0)
    assert rep.min_r[0] == pytest.approx(0.5, rel=1e-15)


def test_survival_report_matches_simulate_path(two_point):
    rep = survival_report(two_point, 5, 100, seed=4)
    for i in range(5):
        path = simulate_path(two_point, 100, PathRng(4, i))
        assert rep.min_log_r[i] == pytest.approx(path.log_shares[:, 0].min(), rel=1e-12)


def test_survival_separated_opponent(two_point):
    sep = separated_strategy([0.8, 0.2], [0.5, 0.5], 0.3 * math.sqrt(2), 0.1)
    cfg = game([1, 1], [LambdaStar(), sep], two_point.growth, two_point.relative)
    short = survival_report(cfg, 200, 500, seed=6, c_grid=[0.5, 0.9])
    long = survival_report(cfg, 200, 1000, seed=6, c_grid=[0.5, 0.9])
    assert short.survived and short.compensator_nondecreasing()
    assert short.compensator_bound_ok().all()
    assert np.all(np.diff(short.eta, axis=0) >= 0)
    # eta_c saturates: doubling the horizon adds no visits below 1/2
    assert np.array_equal(short.eta[0], long.eta[0])


def test_survival_dirichlet_uses_frozen_sample():
    rel = RelativePayoffSpec.dirichlet([1, 2])
    cfg = game([1, 1], [LambdaStar(), ConstantStrategy([0.8, 0.2])], GrowthSpec.constant(1.1), rel)
    rep = survival_report(cfg, 30, 200, seed=0, saa_samples=2048)
    assert not rep.exact and rep.survived
    assert rep.compensator_nondecreasing(tol=3 * rep.saa_se.max())
