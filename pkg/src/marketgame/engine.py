"""Market clearing and the wealth recursion.

The simulator keeps ``(ln r_t, ln W_t, ln S_t)`` per path, where ``r_t`` are
wealth shares, ``W_t`` total wealth and ``S_t`` the total payoff.  ``W_t``
and ``S_t`` coincide whenever every asset is bought by someone (for example
when one investor is fully diversified); otherwise payoffs of unbought
assets are lost and ``W_t < S_t``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .core import MarketState, RelativeWealth, log_sum_exp, safe_log
from .errors import ConfigInvalid
from .payoffs import GrowthSpec, PayoffStep, RelativePayoffSpec, as_path_rng, draw_step
from .strategies import History, Strategy, realize, strategy_from_dict


@dataclass(frozen=True, eq=False)
class GameConfig:
    initial_wealths: np.ndarray
    strategies: tuple
    growth: GrowthSpec
    relative: RelativePayoffSpec

    def __post_init__(self):
        y0 = np.array(self.initial_wealths, dtype=float).ravel()
        if y0.size < 2:
            raise ConfigInvalid("need at least two investors")
        if np.any(~np.isfinite(y0)) or np.any(y0 <= 0):
            raise ConfigInvalid("initial wealths must be finite and positive")
        if len(self.strategies) != y0.size:
            raise ConfigInvalid(f"{y0.size} investors but {len(self.strategies)} strategies")
        y0.setflags(write=False)
        object.__setattr__(self, "initial_wealths", y0)
        object.__setattr__(self, "strategies",
                           tuple(s.resolve(self.relative) for s in self.strategies))

    @property
    def n_investors(self) -> int:
        return self.initial_wealths.size

    @property
    def n_assets(self) -> int:
        return self.relative.n_assets

    @property
    def log_initial_wealth(self) -> float:
        return float(np.log(self.initial_wealths.sum()))

    def fixed_proportions(self) -> Optional[np.ndarray]:
        """M x N proportions if every strategy ignores history, else ``None``."""
        rows = [s.fixed_proportions() for s in self.strategies]
        if any(r is None for r in rows):
            return None
        out = np.array([np.asarray(r) for r in rows])
        if out.shape[1] != self.n_assets:
            raise ConfigInvalid("strategy dimension does not match the number of assets")
        return out

    def to_dict(self) -> dict:
        return {
            "initial_wealths": self.initial_wealths.tolist(),
            "strategies": [s.to_dict() for s in self.strategies],
            "payoffs": {"rho": self.growth.to_dict(), "relative": self.relative.to_dict()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GameConfig":
        rel = RelativePayoffSpec.from_dict(d["payoffs"]["relative"])
        growth = GrowthSpec.from_dict(d["payoffs"]["rho"])
        strategies = tuple(strategy_from_dict(s, rel) for s in d["strategies"])
        return cls(np.asarray(d["initial_wealths"], dtype=float), strategies, growth, rel)


def clear_market(proportions, wealths) -> tuple[np.ndarray, np.ndarray]:
    """Prices and share holdings that clear unit supply of every asset.

    An asset nobody buys gets price 0 and zero holdings.
    """
    lam = np.asarray(proportions, dtype=float)
    y = np.asarray(wealths, dtype=float)
    demand = lam * y[:, None]
    prices = demand.sum(axis=0)
    holdings = np.zeros_like(demand)
    priced = prices > 0
    holdings[:, priced] = demand[:, priced] / prices[priced]
    return prices, holdings


class Advance(NamedTuple):
    log_shares: np.ndarray
    log_mass: np.ndarray
    log_price_shares: np.ndarray


def advance_log_shares(log_shares, proportions, relative) -> Advance:
    """One application of the wealth recursion in relative, log-domain form.

    Shapes broadcast over leading batch axes: ``log_shares (..., M)``,
    ``proportions (..., M, N)``, ``relative (..., N)``.  ``log_mass`` is
    ln(sum_m u^m), the log of W_t / (rho_t S_{t-1}); it is 0 when every asset
    is priced.
    """
    ls = np.asarray(log_shares, dtype=float)
    log_lam = safe_log(proportions)
    log_b = log_sum_exp(log_lam + ls[..., :, None], axis=-2)
    priced = np.isfinite(log_b)
    with np.errstate(invalid="ignore"):
        term = log_lam + safe_log(relative)[..., None, :] - np.where(priced, log_b, 0.0)[..., None, :]
    term = np.where(priced[..., None, :], term, -np.inf)
    log_u = ls + log_sum_exp(term, axis=-1)
    log_mass = log_sum_exp(log_u, axis=-1)
    finite = np.isfinite(log_mass)
    with np.errstate(invalid="ignore"):
        new = np.where(finite[..., None], log_u - np.where(finite, log_mass, 0.0)[..., None], -np.inf)
    return Advance(new, log_mass, log_b)


def step(state: MarketState, proportions, payoff: PayoffStep) -> MarketState:
    lam = np.asarray(proportions, dtype=float)
    rel = np.asarray(payoff.relative)
    adv = advance_log_shares(state.log_shares, lam, rel)
    log_payoff = state.log_total_payoff + math.log(payoff.rho)
    log_w = log_payoff + float(adv.log_mass)
    priced = np.isfinite(adv.log_price_shares)
    with np.errstate(invalid="ignore"):
        log_x = safe_log(lam) + state.log_shares[:, None] - np.where(priced, adv.log_price_shares, 0.0)
    holdings = np.where(priced[None, :], np.exp(log_x), 0.0)
    return MarketState(
        t=state.t + 1,
        relative=RelativeWealth(adv.log_shares),
        log_total_wealth=log_w,
        log_total_payoff=log_payoff,
        payoff_shares=rel.copy(),
        price_shares=np.exp(adv.log_price_shares),
        holdings=holdings,
        log_prev_total_wealth=state.log_total_wealth,
    )


class Reduction(NamedTuple):
    share: float
    proportions: np.ndarray
    degenerate: bool


def representative_reduction(state, proportions, distinguished: int = 0) -> Reduction:
    """Merge every investor except ``distinguished`` into one.

    Returns the merged share 1 - r^d and the wealth-weighted proportions;
    the proportions are all zero (and ``degenerate`` set) when r^d = 1.
    """
    ls = state.log_shares if isinstance(state, MarketState) else np.asarray(state, dtype=float)
    lam = np.asarray(proportions, dtype=float)
    others = np.delete(np.arange(ls.size), distinguished)
    log_rest = float(log_sum_exp(ls[others]))
    if not np.isfinite(log_rest):
        return Reduction(0.0, np.zeros(lam.shape[1]), True)
    weights = np.exp(ls[others] - log_rest)
    return Reduction(math.exp(log_rest), weights @ lam[others], False)


@dataclass(eq=False)
class WealthPath:
    states: list
    proportions: np.ndarray
    payoffs: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.states) - 1

    @property
    def log_shares(self) -> np.ndarray:
        return np.array([s.log_shares for s in self.states])

    @property
    def log_total_wealth(self) -> np.ndarray:
        return np.array([s.log_total_wealth for s in self.states])

    @property
    def log_wealths(self) -> np.ndarray:
        return self.log_shares + self.log_total_wealth[:, None]

    @property
    def rho(self) -> np.ndarray:
        return np.array([p.rho for p in self.payoffs])

    @property
    def relative(self) -> np.ndarray:
        return np.array([np.asarray(p.relative) for p in self.payoffs])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh) -> None:
        m, n = self.proportions.shape[1:] if self.proportions.size else (self.states[0].n_investors, 0)
        header = (["t", "ln_W"] + [f"r_{i + 1}" for i in range(m)] + ["rho"]
                  + [f"R_{j + 1}" for j in range(n)]
                  + [f"lambda_{i + 1}_{j + 1}" for i in range(m) for j in range(n)])
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s in self.states:
            if s.t == 0:
                tail = [""] * (1 + n + m * n)
            else:
                p = self.payoffs[s.t - 1]
                tail = ([_fmt(p.rho)] + [_fmt(x) for x in p.relative]
                        + [_fmt(x) for x in self.proportions[s.t - 1].ravel()])
            w.writerow([s.t, _fmt(s.log_total_wealth)] + [_fmt(x) for x in s.shares] + tail)


def _fmt(x) -> str:
    return format(float(x), ".12g")


def iterate_path(config: GameConfig, rng) -> Iterator[tuple[np.ndarray, PayoffStep, MarketState]]:
    """Endless generator of ``(proportions, payoff, state)`` for t = 1, 2, ..."""
    rng = as_path_rng(rng)
    fixed = config.fixed_proportions()
    n = config.n_assets
    y0 = config.initial_wealths
    lam_hist: list = []
    pay_hist: list = []
    state = MarketState.initial(y0, n)
    t = 0
    while True:
        t += 1
        if fixed is not None:
            lam = fixed
        else:
            rows = [np.asarray(realize(s, History(t, i, y0, n, lam_hist, pay_hist), rng.strategy))
                    for i, s in enumerate(config.strategies)]
            if any(r.shape != (n,) for r in rows):
                raise ConfigInvalid(f"every strategy must return {n} proportions")
            lam = np.array(rows)
        payoff = draw_step(config.growth, config.relative, rng)
        state = step(state, lam, payoff)
        lam_hist.append(lam)
        pay_hist.append(payoff)
        yield lam, payoff, state


def simulate_path(config: GameConfig, horizon: int, rng) -> WealthPath:
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    states = [MarketState.initial(config.initial_wealths, config.n_assets)]
    lams, pays = [], []
    for lam, payoff, state in iterate_path(config, rng):
        lams.append(lam)
        pays.append(payoff)
        states.append(state)
        if state.t >= horizon:
            break
    return WealthPath(states, np.array(lams), pays)


def game(initial_wealths: Sequence[float], strategies: Sequence[Strategy],
         growth: GrowthSpec, relative: RelativePayoffSpec) -> GameConfig:
    return GameConfig(np.asarray(initial_wealths, dtype=float), tuple(strategies), growth, relative)
