"""Crossing times of wealth levels and their Monte Carlo estimation.

Paths are simulated in vectorized batches.  Every path draws from its own
stream keyed by ``(seed, path_index)`` and stops consuming once all tracked
crossings have happened, so results do not depend on batch size or on the
number of worker processes.  Per-path crossing times are gathered in path
order before any statistic is computed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analysis.bounds import TheoremBounds
from .core import l2_norm
from .engine import GameConfig, advance_log_shares, iterate_path
from .errors import CensoringExceeded, ConfigInvalid
from .payoffs import PathRng, draw_block
from .strategies import LambdaStar

DEFAULT_CENSOR_BOUND = 1e-3
RATIO_HORIZON_FACTOR = 16
BLOCK = 128


def geometric_levels(start: float, factor: float = 10.0, count: int = 5) -> np.ndarray:
    return start * factor ** np.arange(count, dtype=float)


def crossing_time(path, investor: int, level: float):
    """First t >= 0 with Y_t >= level (compared in log domain); ``inf`` if censored."""
    if level <= 0:
        raise ValueError("level must be positive")
    hits = np.nonzero(path.log_wealths[:, investor] >= math.log(level))[0]
    return int(hits[0]) if hits.size else math.inf


@dataclass(frozen=True)
class CrossingTimes:
    level: float
    times: tuple
    horizon: int

    @property
    def censored(self) -> tuple:
        return tuple(math.isinf(t) for t in self.times)


def crossing_times(path, level: float) -> CrossingTimes:
    m = path.states[0].n_investors
    return CrossingTimes(level, tuple(crossing_time(path, i, level) for i in range(m)), path.horizon)


# --------------------------------------------------------------------------
# Monte Carlo kernel


def _initial_tau(config: GameConfig, log_levels: np.ndarray, n_paths: int) -> np.ndarray:
    ly0 = np.log(config.initial_wealths)
    tau = np.full((n_paths, config.n_investors, log_levels.size), np.inf)
    tau[:, ly0[:, None] >= log_levels[None, :]] = 0.0
    return tau


def _chunk_fast(config, lam, log_levels, track, seed, start, stop, horizon):
    n_paths = stop - start
    rngs = [PathRng(seed, i) for i in range(start, stop)]
    w0 = config.log_initial_wealth
    ls = np.tile(np.log(config.initial_wealths) - w0, (n_paths, 1))
    log_s = np.full(n_paths, w0)
    tau = _initial_tau(config, log_levels, n_paths)
    t = 0
    active = np.nonzero(np.isinf(tau[:, track]).any(axis=(1, 2)))[0]
    while t < horizon and active.size:
        n = min(BLOCK, horizon - t)
        draws = [draw_block(config.growth, config.relative, rngs[i], n) for i in active]
        log_rho = np.log(np.stack([d[0] for d in draws]))
        rel = np.stack([d[1] for d in draws])
        a_ls, a_s, a_tau = ls[active], log_s[active], tau[active]
        for k in range(n):
            adv = advance_log_shares(a_ls, lam, rel[:, k])
            a_ls = adv.log_shares
            a_s = a_s + log_rho[:, k]
            ly = a_ls + (a_s + adv.log_mass)[:, None]
            hit = (ly[:, :, None] >= log_levels) & np.isinf(a_tau)
            a_tau[hit] = t + k + 1
        ls[active], log_s[active], tau[active] = a_ls, a_s, a_tau
        t += n
        active = np.nonzero(np.isinf(tau[:, track]).any(axis=(1, 2)))[0]
    return tau


def _chunk_slow(config, log_levels, track, seed, start, stop, horizon):
    tau = _initial_tau(config, log_levels, stop - start)
    for row, i in enumerate(range(start, stop)):
        if not np.isinf(tau[row, track]).any():
            continue
        for lam, payoff, state in iterate_path(config, PathRng(seed, i)):
            t = state.t
            ly = state.log_wealths
            hit = (ly[:, None] >= log_levels) & np.isinf(tau[row])
            tau[row][hit] = t
            if t >= horizon or not np.isinf(tau[row, track]).any():
                break
    return tau


def _run_chunk(args):
    config, log_levels, track, seed, start, stop, horizon = args
    lam = config.fixed_proportions()
    if lam is None:
        return _chunk_slow(config, log_levels, track, seed, start, stop, horizon)
    return _chunk_fast(config, lam, log_levels, track, seed, start, stop, horizon)


def resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        workers = int(os.environ.get("MARKETGAME_WORKERS", "1"))
    return max(1, int(workers))


def simulate_crossings(config: GameConfig, levels: Sequence[float], paths: int, horizon: int,
                       seed: int, investors: Optional[Sequence[int]] = None,
                       workers: Optional[int] = None) -> np.ndarray:
    """Crossing times ``tau[path, investor, level]`` (``inf`` = censored).

    Every investor is recorded; the run for a path stops once the
    ``investors`` of interest (default: all) have crossed every level.
    """
    log_levels = np.log(np.asarray(levels, dtype=float))
    track = list(range(config.n_investors)) if investors is None else list(investors)
    workers = resolve_workers(workers)
    if config.fixed_proportions() is None:
        workers = 1
    if workers == 1 or paths < 2 * workers:
        return _run_chunk((config, log_levels, track, seed, 0, paths, int(horizon)))
    n_chunks = workers * 4
    edges = np.linspace(0, paths, n_chunks + 1).astype(int)
    jobs = [(config, log_levels, track, seed, int(a), int(b), int(horizon))
            for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, jobs))
    return np.concatenate(parts, axis=0)


# --------------------------------------------------------------------------
# Estimates


@dataclass(frozen=True)
class CrossingEstimate:
    level: float
    investor: int
    mean: float
    se: float
    paths: int
    censored: int
    horizon: int
    censor_bound: float = DEFAULT_CENSOR_BOUND
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None

    @property
    def total_paths(self) -> int:
        return self.paths + self.censored

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.total_paths if self.total_paths else 1.0

    @property
    def valid(self) -> bool:
        return self.paths > 0 and self.censored_fraction <= self.censor_bound


def _summarize(taus: np.ndarray, **kw) -> CrossingEstimate:
    done = taus[np.isfinite(taus)]
    n = done.size
    mean = float(done.mean()) if n else math.nan
    se = float(done.std(ddof=1) / math.sqrt(n)) if n > 1 else (0.0 if n == 1 else math.nan)
    return CrossingEstimate(mean=mean, se=se, paths=n, censored=int(taus.size - n), **kw)


def lambda_star_investor(config: GameConfig) -> Optional[int]:
    for i, s in enumerate(config.strategies):
        if isinstance(s, LambdaStar):
            return i
    return None


def auto_horizon(config: GameConfig, level: float, investor: int = 0) -> int:
    """ceil(4 * upper_tau(level)), using the investor's own initial wealth."""
    bounds = TheoremBounds.for_game(config, investor)
    if level <= bounds.y0_1:
        return 1
    return int(math.ceil(4.0 * bounds.upper_tau(level)))


def game_horizon(config: GameConfig, level: float) -> int:
    """Horizon long enough for every investor to cross ``level``.

    The upper crossing bound only covers lambda* investors; when anyone else
    plays, the lambda* horizon is stretched by ``RATIO_HORIZON_FACTOR``.
    """
    star = lambda_star_investor(config)
    base = auto_horizon(config, level, 0 if star is None else star)
    if all(isinstance(s, LambdaStar) for s in config.strategies):
        return base
    return RATIO_HORIZON_FACTOR * base


def _bounds_for(config, investor, level):
    b = TheoremBounds.for_game(config, investor)
    lower = b.lower_tau(level) if level >= b.w0 else None
    upper = None
    if isinstance(config.strategies[investor], LambdaStar) and level > b.y0_1:
        upper = b.upper_tau(level)
    return lower, upper


def estimates_from_taus(config, taus, levels, investors, horizon, censor_bound):
    out = []
    for k, lev in enumerate(levels):
        for i in investors:
            lo, up = _bounds_for(config, i, float(lev))
            out.append(_summarize(taus[:, i, k], level=float(lev), investor=i, horizon=int(horizon),
                                  censor_bound=censor_bound, lower_bound=lo, upper_bound=up))
    return out


def estimate_expected_tau(config: GameConfig, investor: int, level: float, paths: int,
                          horizon="auto", seed: int = 0, censor_bound: float = DEFAULT_CENSOR_BOUND,
                          workers: Optional[int] = None) -> CrossingEstimate:
    if paths < 100:
        raise ConfigInvalid("at least 100 paths are required")
    if horizon == "auto":
        horizon = auto_horizon(config, level, investor)
    taus = simulate_crossings(config, [level], paths, horizon, seed, [investor], workers)
    est = estimates_from_taus(config, taus, [level], [investor], horizon, censor_bound)[0]
    if not est.valid:
        raise CensoringExceeded(
            f"{est.censored}/{est.total_paths} paths censored at horizon {horizon} "
            f"(bound {censor_bound})", est)
    return est


# --------------------------------------------------------------------------
# Ratio curves


@dataclass
class RatioCurve:
    levels: np.ndarray
    mean_tau_1: np.ndarray
    mean_tau_2: np.ndarray
    ratio: np.ndarray
    se: np.ndarray
    paths_used: np.ndarray
    censored: np.ndarray
    horizon: int
    opponent: int
    theorem2_rhs: Optional[float] = None
    f_a: Optional[float] = None
    separation: Optional[float] = None
    estimates: list = field(default_factory=list)

    @property
    def ci_lo(self) -> np.ndarray:
        return self.ratio - 1.96 * self.se

    @property
    def ci_hi(self) -> np.ndarray:
        return self.ratio + 1.96 * self.se


def ratio_of_means(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Ratio mean(a)/mean(b) over paired samples with its delta-method SE."""
    n = a.size
    ma, mb = a.mean(), b.mean()
    r = ma / mb
    if n < 2:
        return float(r), math.nan
    cov = np.cov(a, b, ddof=1)
    var = (cov[0, 0] / ma**2 + cov[1, 1] / mb**2 - 2 * cov[0, 1] / (ma * mb)) if ma > 0 else 0.0
    return float(r), float(abs(r) * math.sqrt(max(var, 0.0) / n))


def _theorem2_for(config: GameConfig, opponent: int):
    """(rhs, f(a), a) when the two-investor separation theorem applies, else Nones."""
    from .analysis.separation import compute_f

    fixed = config.strategies[opponent].fixed_proportions()
    if config.n_investors != 2 or fixed is None or not config.relative.linearly_independent:
        return None, None, None
    lam_star = np.asarray(config.relative.mean)
    a = l2_norm(np.asarray(fixed) - lam_star)
    if a <= 0:
        return None, None, None
    fa = compute_f(config.relative, a)
    if not fa.feasible:
        return None, None, a
    rhs = 1.0 - min(abs(fa.value), config.growth.theta) / config.growth.theta
    return rhs, fa.value, a


def ratio_curve(config: GameConfig, levels: Sequence[float], paths: int, seed: int,
                opponent: int = 1, horizon="auto", censor_bound: float = DEFAULT_CENSOR_BOUND,
                workers: Optional[int] = None) -> RatioCurve:
    """E tau^1_l / E tau^m_l on a level grid from one shared pool of paths.

    Investor 0 must play lambda*.  A path censored for either investor at a
    level is dropped from both means at that level.
    """
    if not isinstance(config.strategies[0], LambdaStar):
        raise ConfigInvalid("investor 1 must use the lambda_star strategy")
    levels = np.asarray(sorted(float(x) for x in levels))
    if np.any(np.diff(levels) <= 0):
        raise ConfigInvalid("levels must be strictly increasing")
    if horizon == "auto":
        horizon = game_horizon(config, float(levels[-1]))
    taus = simulate_crossings(config, levels, paths, horizon, seed, [0, opponent], workers)
    ests = estimates_from_taus(config, taus, levels, [0, opponent], horizon, censor_bound)
    n = levels.size
    out = {k: np.full(n, np.nan) for k in ("m1", "m2", "ratio", "se")}
    used = np.zeros(n, dtype=int)
    cens = np.zeros(n, dtype=int)
    for k in range(n):
        a, b = taus[:, 0, k], taus[:, opponent, k]
        ok = np.isfinite(a) & np.isfinite(b)
        used[k] = int(ok.sum())
        cens[k] = int(ok.size - used[k])
        if cens[k] > censor_bound * ok.size:
            raise CensoringExceeded(
                f"level {levels[k]:g}: {cens[k]}/{ok.size} paths censored at horizon {horizon}")
        out["m1"][k], out["m2"][k] = a[ok].mean(), b[ok].mean()
        out["ratio"][k], out["se"][k] = ratio_of_means(a[ok], b[ok])
    rhs, fa, sep = _theorem2_for(config, opponent)
    return RatioCurve(levels, out["m1"], out["m2"], out["ratio"], out["se"], used, cens,
                      int(horizon), opponent, rhs, fa, sep, ests)


# --------------------------------------------------------------------------
# Exhaustive enumeration for finite payoff distributions


@dataclass(frozen=True)
class ExactTau:
    mean: float
    unresolved: float
    depth: int

    @property
    def resolved(self) -> bool:
        return self.unresolved == 0.0


def exact_expected_tau(config: GameConfig, investor: int, level: float, depth: int) -> ExactTau:
    """E tau_l by enumerating every payoff sequence up to ``depth`` steps.

    Requires finite growth and relative-payoff supports and history-free
    strategies.  ``mean`` covers only resolved branches; it equals E tau_l
    exactly when ``unresolved`` is 0.
    """
    lam = config.fixed_proportions()
    gs, rs = config.growth.support(), config.relative.support()
    if lam is None or gs is None or rs is None:
        raise ConfigInvalid("exhaustive enumeration needs finite supports and fixed strategies")
    rho_v, rho_p = gs
    rel_v, rel_p = rs
    log_rho = np.repeat(np.log(rho_v), rel_v.shape[0])
    rel = np.tile(rel_v, (rho_v.size, 1))
    prob = np.outer(rho_p, rel_p).ravel()
    log_level = math.log(level)
    w0 = config.log_initial_wealth
    ls = (np.log(config.initial_wealths) - w0)[None, :]
    log_s = np.array([w0])
    mass = np.array([1.0])
    if ls[0, investor] + w0 >= log_level:
        return ExactTau(0.0, 0.0, depth)
    expected = 0.0
    k = prob.size
    for t in range(1, depth + 1):
        ls = np.repeat(ls, k, axis=0)
        log_s = np.repeat(log_s, k) + np.tile(log_rho, log_s.size)
        mass = np.repeat(mass, k) * np.tile(prob, mass.size)
        adv = advance_log_shares(ls, lam, np.tile(rel, (ls.shape[0] // k, 1)))
        ls = adv.log_shares
        ly = ls[:, investor] + log_s + adv.log_mass
        hit = ly >= log_level
        expected += t * float(mass[hit].sum())
        keep = ~hit
        ls, log_s, mass = ls[keep], log_s[keep], mass[keep]
        if mass.size == 0:
            break
    return ExactTau(expected, float(mass.sum()), depth)


def example1_crossings(relative, rho: float, opponent, levels: Sequence[float],
                       initial_wealths=(0.5, 0.5), max_steps: int = 1_000_000) -> np.ndarray:
    """Exact integer crossing times (L x 2) in the deterministic two-asset example.

    Investor 1 plays lambda* = ``relative``, investor 2 the constant ``opponent``.
    Raises CensoringExceeded if some level is not reached within ``max_steps``.
    """
    from .payoffs import example1_specs
    from .strategies import ConstantStrategy

    growth, rel = example1_specs(relative, rho)
    config = GameConfig(np.asarray(initial_wealths, dtype=float),
                        (LambdaStar(), ConstantStrategy(opponent)), growth, rel)
    tau = simulate_crossings(config, levels, 1, max_steps, 0, workers=1)[0].T
    if np.isinf(tau).any():
        raise CensoringExceeded(f"a level was not reached within {max_steps} steps")
    return tau.astype(np.int64)
