"""Martingale diagnostics for the relative wealth of a lambda* investor.

Everything here works with the two-investor reduction: the lambda* investor
with share r, and everybody else merged into one investor with share
r~ = 1 - r and wealth-weighted proportions lam~.  With
beta = r lam + r~ lam~ one step gives

    r_t / r_{t-1} = sum_n lam^n R^n / beta^n
                  = 1 + r~ sum_n R^n (lam^n - lam~^n) / beta^n,

and the second form is what we take the log of (``log1p``), so nothing
cancels when r~ is tiny.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core import log_sum_exp
from ..engine import GameConfig, advance_log_shares, iterate_path, representative_reduction
from ..errors import ConfigInvalid, NumericalFailure
from ..payoffs import GrowthSpec, PathRng, RelativePayoffSpec, draw_block
from ..strategies import LambdaStar


def _generator(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def log_growth(lam, lam_other, r, relative, r_other=None) -> np.ndarray:
    """ln(r_t / r_{t-1}) for the investor holding ``lam`` against ``lam_other``.

    ``relative`` may carry leading sample axes.  ``lam_other`` need not sum
    to one (the r' construction perturbs it).
    """
    lam = np.asarray(lam, dtype=float)
    lo = np.asarray(lam_other, dtype=float)
    rt = 1.0 - r if r_other is None else r_other
    beta = r * lam + rt * lo
    R = np.asarray(relative, dtype=float)
    return np.log1p(rt * (R @ ((lam - lo) / beta)))


def kl_bound(lam, beta) -> float:
    """sum_n lam^n (ln lam^n - ln beta^n); a Jensen lower bound on the drift."""
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    m = lam > 0
    return float(np.sum(lam[m] * (np.log(lam[m]) - np.log(beta[m]))))


def lemma1_check(x, y) -> tuple[float, float]:
    """Both sides of  sum x (ln x - ln y) >= 1/4 ||x - y/|y|||^2 - ln|y|."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("lemma1_check needs strictly positive coordinates")
    if abs(x.sum() - 1.0) > 1e-12:
        raise ValueError("x must sum to one")
    ny = y.sum()
    lhs = float(np.sum(x * (np.log(x) - np.log(y))))
    rhs = 0.25 * float(np.sum((x - y / ny) ** 2)) - math.log(ny)
    return lhs, rhs


def lemma1_lower_bound(lam, beta) -> float:
    return lemma1_check(lam, beta)[1]


# --------------------------------------------------------------------------
# State harvesting and conditional drift


@dataclass(frozen=True)
class DriftState:
    """Reduced state before step t: shares in log form and step-t proportions."""

    log_r: float
    log_r_other: float
    lam: np.ndarray
    lam_other: np.ndarray
    t: int = 0

    @property
    def r(self) -> float:
        return math.exp(self.log_r)

    @property
    def r_other(self) -> float:
        return math.exp(self.log_r_other)

    @property
    def beta(self) -> np.ndarray:
        return self.r * self.lam + self.r_other * self.lam_other


def reduce_state(log_shares, proportions, investor: int = 0, t: int = 0) -> DriftState:
    ls = np.asarray(log_shares, dtype=float)
    red = representative_reduction(ls, proportions, investor)
    others = np.delete(np.arange(ls.size), investor)
    log_rest = float(log_sum_exp(ls[others]))
    lam = np.asarray(proportions, dtype=float)[investor]
    lam_other = lam.copy() if red.degenerate else red.proportions
    return DriftState(float(ls[investor]), log_rest, lam.copy(), lam_other, t)


def harvest_states(config: GameConfig, n_states: int, horizon: int = 50, seed: int = 0,
                   investor: int = 0) -> list[DriftState]:
    """One state per independent path, at a uniformly chosen step in 1..horizon."""
    pick = _generator(seed, 2**31 - 1)
    times = pick.integers(1, horizon + 1, size=n_states)
    out = []
    for i, t_pick in enumerate(times):
        prev = config.initial_wealths / config.initial_wealths.sum()
        prev_ls = np.log(prev)
        for lam, _, state in iterate_path(config, PathRng(seed, i)):
            if state.t == t_pick:
                out.append(reduce_state(prev_ls, lam, investor, int(t_pick)))
                break
            prev_ls = state.log_shares
    return out


@dataclass
class DriftReport:
    """Per-state conditional drifts of ln r (and of ln r~ for the opponent)."""

    drift: np.ndarray
    se: np.ndarray
    kl: np.ndarray
    lower_bound: np.ndarray
    other_drift: np.ndarray
    other_se: np.ndarray
    inner_samples: int

    @property
    def submartingale_ok(self) -> np.ndarray:
        return self.drift >= np.maximum(0.0, self.lower_bound) - 3.0 * self.se

    @property
    def supermartingale_ok(self) -> np.ndarray:
        return self.other_drift <= 3.0 * self.other_se

    @property
    def passed(self) -> bool:
        return bool(self.submartingale_ok.all() and self.supermartingale_ok.all())


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def drift_test(config: GameConfig, states: Sequence[DriftState], inner_samples: int = 10_000,
               seed: int = 0) -> DriftReport:
    """Estimate E[ln(r_t/r_{t-1}) | state] by fresh draws of R for each state."""
    k = len(states)
    cols = {c: np.zeros(k) for c in ("drift", "se", "kl", "lb", "odrift", "ose")}
    for j, s in enumerate(states):
        R = config.relative.draw(_generator(seed, j), inner_samples)
        r, rt = s.r, s.r_other
        cols["drift"][j], cols["se"][j] = _mean_se(log_growth(s.lam, s.lam_other, r, R, rt))
        cols["odrift"][j], cols["ose"][j] = _mean_se(log_growth(s.lam_other, s.lam, rt, R, r))
        cols["kl"][j] = kl_bound(s.lam, s.beta)
        cols["lb"][j] = lemma1_lower_bound(s.lam, s.beta)
    return DriftReport(cols["drift"], cols["se"], cols["kl"], cols["lb"],
                       cols["odrift"], cols["ose"], inner_samples)


def exact_drift(lam, lam_other, r, rel: RelativePayoffSpec, r_other=None) -> float:
    """Conditional drift as an exact sum over a finite relative-payoff support."""
    sup = rel.support()
    if sup is None:
        raise ConfigInvalid("exact drift needs a finite support")
    pts, p = sup
    return float(p @ log_growth(lam, lam_other, r, pts, r_other))


# --------------------------------------------------------------------------
# The perturbed share sequence r'


@dataclass
class ModifiedShares:
    r: np.ndarray
    r_prime: np.ndarray
    fired: np.ndarray
    beta_norm: np.ndarray
    delta: float


def modified_share_path(lam, lam_other, relative, r0: float, epsilon: float,
                        rtol: float = 1e-12) -> ModifiedShares:
    """Run r_t alongside the perturbed r'_t used for the upper crossing bound.

    ``lam`` is one vector or a (T, N) sequence; ``lam_other`` and
    ``relative`` are (T, N).  When min lam~ <= eps/2 and r'_{t-1} <= 1/2 the
    opponent's proportions get lam * delta added (delta = eps^2/256).
    """
    rel = np.atleast_2d(np.asarray(relative, dtype=float))
    T, n = rel.shape
    lt = np.broadcast_to(np.asarray(lam_other, dtype=float), (T, n))
    lm = np.broadcast_to(np.asarray(lam, dtype=float), (T, n))
    delta = epsilon * epsilon / 256.0
    r = np.empty(T + 1)
    rp = np.empty(T + 1)
    fired = np.zeros(T, dtype=bool)
    bnorm = np.ones(T)
    r[0] = rp[0] = r0
    for t in range(T):
        fire = lt[t].min() <= epsilon / 2.0 and rp[t] <= 0.5
        lt_p = lt[t] + delta * lm[t] if fire else lt[t]
        fired[t] = fire
        bnorm[t] = float(np.sum(rp[t] * lm[t] + (1.0 - rp[t]) * lt_p))
        r[t + 1] = r[t] * math.exp(float(log_growth(lm[t], lt[t], r[t], rel[t])))
        rp[t + 1] = rp[t] * math.exp(float(log_growth(lm[t], lt_p, rp[t], rel[t])))
        if rp[t + 1] > r[t + 1] * (1.0 + rtol):
            raise NumericalFailure(f"r' exceeds r at t={t + 1}: {rp[t + 1]!r} > {r[t + 1]!r}")
        if rp[t + 1] > rp[t] / (delta * epsilon) * (1.0 + rtol):
            raise NumericalFailure(f"r' grew faster than 1/(delta eps) at t={t + 1}")
    return ModifiedShares(r, rp, fired, bnorm, delta)


# --------------------------------------------------------------------------
# Stopped random walk: E X_tau <= mu + 2 sigma sqrt(E tau)


def first_exceedance(c: float) -> Callable:
    """Stop at the first t with ln rho_t > c."""
    return lambda t, x: x > c


def fixed_time(k: int) -> Callable:
    return lambda t, x: np.full(np.shape(x), t >= k, dtype=bool)


@dataclass(frozen=True)
class Lemma2Result:
    lhs: float
    lhs_se: float
    mean_tau: float
    rhs: float
    se: float
    mu: float
    sigma: float
    paths: int

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + 3.0 * self.se


def lemma2_check(growth: GrowthSpec, rule: Callable, paths: int, seed: int = 0,
                 max_steps: int = 100_000) -> Lemma2Result:
    """Monte Carlo of both sides, X_t = ln rho_t; ``rule(t, x_t)`` decides stopping.

    ``se`` is the delta-method standard error of lhs - rhs.
    """
    gen = _generator(seed, 0)
    x_tau = np.full(paths, np.nan)
    tau = np.zeros(paths)
    alive = np.ones(paths, dtype=bool)
    for t in range(1, max_steps + 1):
        x = np.log(growth.draw(gen, paths))
        stop = alive & np.asarray(rule(t, x), dtype=bool)
        x_tau[stop] = x[stop]
        tau[stop] = t
        alive &= ~stop
        if not alive.any():
            break
    if alive.any():
        raise NumericalFailure(f"{int(alive.sum())} paths did not stop within {max_steps} steps")
    mu, sigma = growth.theta, growth.sigma
    mt = float(tau.mean())
    rhs = mu + 2.0 * sigma * math.sqrt(mt)
    lhs, lhs_se = _mean_se(x_tau)
    diff = x_tau - sigma * tau / math.sqrt(mt)
    se = float(diff.std(ddof=1) / math.sqrt(paths))
    return Lemma2Result(lhs, lhs_se, mt, rhs, se, mu, sigma, paths)


def lemma2_exact(growth: GrowthSpec, rule: Callable, tol: float = 1e-16,
                 max_steps: int = 1_000_000) -> tuple[float, float]:
    """(E X_tau, E tau) by summing over the stopping law, for finite ln rho support."""
    sup = growth.support()
    if sup is None:
        raise ConfigInvalid("exact stopped-walk evaluation needs a finite growth support")
    vals, p = sup
    x = np.log(vals)
    alive = 1.0
    ex = etau = 0.0
    for t in range(1, max_steps + 1):
        s = np.asarray(rule(t, x), dtype=bool)
        ps = float(p[s].sum())
        ex += alive * float(p[s] @ x[s])
        etau += alive * ps * t
        alive *= 1.0 - ps
        if alive <= tol:
            return ex, etau
    raise NumericalFailure("stopping law did not converge")


def lemma2_exact_first_exceedance(growth: GrowthSpec, c: float) -> tuple[float, float, float]:
    """Closed form for the geometric rule: (E X_tau, E tau, mu + 2 sigma sqrt(E tau))."""
    vals, p = growth.support()
    x = np.log(vals)
    hit = x > c
    q = float(p[hit].sum())
    if q == 0:
        raise ConfigInvalid(f"ln rho never exceeds {c}")
    ex = float(p[hit] @ x[hit]) / q
    return ex, 1.0 / q, growth.theta + 2.0 * growth.sigma * math.sqrt(1.0 / q)


# --------------------------------------------------------------------------
# Survival, compensator and occupation counts


DEFAULT_C_GRID = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass
class MartingaleReport:
    """Path-level survival statistics for a lambda* investor.

    ``drift``/``se`` are per-step means across paths of the conditional drift
    of ln r_t, ``compensator`` the across-path mean of C_t.  Per-path arrays
    carry a leading path axis.
    """

    horizon: int
    drift: np.ndarray
    se: np.ndarray
    compensator: np.ndarray
    path_compensator: np.ndarray
    min_log_r: np.ndarray
    c_grid: np.ndarray
    eta: np.ndarray
    sum_sq: np.ndarray
    separation: np.ndarray
    exact: bool
    saa_se: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def min_r(self) -> np.ndarray:
        return np.exp(self.min_log_r)

    @property
    def survived(self) -> bool:
        return bool(np.all(np.isfinite(self.min_log_r)))

    def compensator_nondecreasing(self, tol: float = 0.0) -> bool:
        inc = np.diff(self.path_compensator, axis=1)
        return bool(np.all(inc >= -tol))

    def compensator_bound_ok(self, rtol: float = 1e-9) -> np.ndarray:
        """sum (1 - r_{t-1})^2 <= 4 C_T / a^2 on each path."""
        a2 = self.separation ** 2
        rhs = 4.0 * self.path_compensator[:, -1]
        return self.sum_sq * a2 <= rhs * (1.0 + rtol) + 1e-300

    def eta_mean(self) -> np.ndarray:
        return self.eta.mean(axis=1)


def _path_arrays(config: GameConfig, horizon: int, seed: int, i: int):
    """(lam[T, M, N] or None, R[T, N]) for path ``i``."""
    rng = PathRng(seed, i)
    if config.fixed_proportions() is not None:
        return None, draw_block(config.growth, config.relative, rng, horizon)[1]
    lams, rels = [], []
    for lam, pay, state in iterate_path(config, rng):
        lams.append(lam)
        rels.append(np.asarray(pay.relative))
        if state.t >= horizon:
            break
    return np.array(lams), np.array(rels)


def survival_report(config: GameConfig, paths: int, horizon: int, seed: int = 0,
                    c_grid: Sequence[float] = DEFAULT_C_GRID, investor: int = 0,
                    saa_samples: int = 4096) -> MartingaleReport:
    """Simulate ``paths`` paths and collect compensator, minima and eta_c.

    Path i uses the same stream as ``simulate_path(config, horizon, PathRng(seed, i))``.
    Conditional drifts are exact for finite relative-payoff supports and use
    one frozen sample of ``saa_samples`` draws otherwise.
    """
    if not isinstance(config.strategies[investor], LambdaStar):
        raise ConfigInvalid("the tracked investor must use lambda_star")
    fixed = config.fixed_proportions()
    sup = config.relative.support()
    if sup is None:
        pts = config.relative.draw(_generator(seed, 2**31 - 2), saa_samples)
        wts = np.full(saa_samples, 1.0 / saa_samples)
    else:
        pts, wts = sup
    c_grid = np.asarray(sorted(c_grid), dtype=float)
    log_c = np.log(c_grid)

    data = [_path_arrays(config, horizon, seed, i) for i in range(paths)]
    rel = np.stack([d[1] for d in data], axis=0)                    # P, T, N
    lam_all = None if fixed is not None else np.stack([d[0] for d in data], axis=0)

    m = config.n_investors
    others = np.delete(np.arange(m), investor)
    ls = np.tile(np.log(config.initial_wealths / config.initial_wealths.sum()), (paths, 1))
    drift = np.zeros((paths, horizon))
    saa_se = np.zeros((paths, horizon)) if sup is None else np.zeros(0)
    sum_sq = np.zeros(paths)
    sep = np.full(paths, np.inf)
    min_log_r = ls[:, investor].copy()
    eta = (ls[:, investor][None, :] < log_c[:, None]).astype(np.int64)
    for t in range(horizon):
        lam = fixed if fixed is not None else lam_all[:, t]
        lam_b = np.broadcast_to(lam, (paths,) + np.shape(lam)[-2:])
        log_rest = log_sum_exp(ls[:, others], axis=-1)
        wts_o = np.exp(ls[:, others] - log_rest[:, None])
        lam_o = np.einsum("pk,pkn->pn", wts_o, lam_b[:, others])
        lam_i = lam_b[:, investor]
        r, rt = np.exp(ls[:, investor]), np.exp(log_rest)
        beta = r[:, None] * lam_i + rt[:, None] * lam_o
        vals = np.log1p(rt[:, None] * np.einsum("kn,pn->pk", pts, (lam_i - lam_o) / beta))
        drift[:, t] = vals @ wts
        if sup is None:
            saa_se[:, t] = vals.std(axis=1, ddof=1) / math.sqrt(saa_samples)
        sum_sq += rt ** 2
        sep = np.minimum(sep, np.sqrt(np.sum((lam_i - lam_o) ** 2, axis=1)))
        ls = advance_log_shares(ls, lam_b, rel[:, t]).log_shares
        min_log_r = np.minimum(min_log_r, ls[:, investor])
        eta += ls[:, investor][None, :] < log_c[:, None]
    comp = np.concatenate([np.zeros((paths, 1)), np.cumsum(drift, axis=1)], axis=1)
    mean_drift = drift.mean(axis=0)
    se = drift.std(axis=0, ddof=1) / math.sqrt(paths) if paths > 1 else np.zeros(horizon)
    return MartingaleReport(horizon, mean_drift, se, comp.mean(axis=0), comp, min_log_r,
                            c_grid, eta, sum_sq, sep, sup is not None, saa_se)
