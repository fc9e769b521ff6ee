"""Numeric building blocks shared by the rest of the package.

Vectors on the standard simplex, the per-step market snapshot and a couple of
log-domain helpers.  Total wealth grows exponentially along a path, so it is
always carried as a logarithm; relative quantities (shares, proportions,
relative payoffs) stay linear unless they can underflow.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveMass

SIMPLEX_TOL = 1e-12


def l1_norm(x) -> float:
    return float(np.sum(np.abs(np.asarray(x, dtype=float))))


def l2_norm(x) -> float:
    # hypot rescales internally, so tiny or huge entries do not under/overflow
    return math.hypot(*np.ravel(np.asarray(x, dtype=float)).tolist())


def log_sum_exp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable ``log(sum(exp(x)))`` along ``axis``; all ``-inf`` slices give ``-inf``."""
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def safe_log(x) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def project_simplex(y) -> np.ndarray:
    """Euclidean projection of ``y`` onto the standard simplex (sort-based)."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, y.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    shift = css[rho] / (rho + 1.0)
    return np.maximum(y - shift, 0.0)


@dataclass(frozen=True, eq=False)
class SimplexVector:
    """A point of the standard simplex with at least two coordinates.

    Construction renormalizes silently (generators accumulate rounding
    drift) and rejects only negative or zero total mass.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size < 2:
            raise NonPositiveMass(f"simplex vectors need N >= 2 coordinates, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise NonPositiveMass("simplex weights must be finite")
        if np.any(w < 0):
            raise NonPositiveMass(f"negative weight in {w}")
        total = w.sum()
        if total <= 0:
            raise NonPositiveMass("weights sum to zero")
        if abs(total - 1.0) > SIMPLEX_TOL:
            w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.weights
        return self.weights.astype(dtype)

    def __len__(self):
        return self.weights.size

    def __getitem__(self, i):
        return self.weights[i]

    def __iter__(self):
        return iter(self.weights.tolist())

    def __eq__(self, other):
        if isinstance(other, SimplexVector):
            return np.array_equal(self.weights, other.weights)
        return NotImplemented

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self):
        return f"SimplexVector({self.weights.tolist()})"

    @property
    def n(self) -> int:
        return self.weights.size

    def min(self) -> float:
        return float(self.weights.min())

    def is_interior(self) -> bool:
        return bool(np.all(self.weights > 0))

    def tolist(self) -> list[float]:
        return self.weights.tolist()


def make_simplex(raw) -> SimplexVector:
    """Normalize a nonnegative vector onto the simplex. Idempotent."""
    if isinstance(raw, SimplexVector):
        return raw
    return SimplexVector(raw)


@dataclass(frozen=True, eq=False)
class RelativeWealth:
    """Wealth shares r_t^m = Y_t^m / W_t, held as logarithms.

    A dominated investor's share can fall far below the resolution of
    ``1 - r`` for the leader, so shares are never recovered by subtraction.
    """

    log_shares: np.ndarray

    def __post_init__(self):
        ls = np.array(self.log_shares, dtype=float)
        ls.setflags(write=False)
        object.__setattr__(self, "log_shares", ls)

    @property
    def shares(self) -> np.ndarray:
        return np.exp(self.log_shares)

    def complement(self, m: int) -> float:
        """1 - r^m, summed from the other investors' shares."""
        others = np.delete(self.log_shares, m)
        return float(np.exp(log_sum_exp(others)))

    def log_complement(self, m: int) -> float:
        return float(log_sum_exp(np.delete(self.log_shares, m)))


@dataclass(frozen=True, eq=False)
class MarketState:
    """Market snapshot at time ``t``.

    ``holdings`` and ``price_shares`` describe the portfolios bought at
    ``t - 1`` (which paid ``payoff_shares`` at ``t``); they are zero at t = 0.
    Absolute quantities are exposed as properties and may overflow on long
    paths; the log fields never do.
    """

    t: int
    relative: RelativeWealth
    log_total_wealth: float
    log_total_payoff: float
    payoff_shares: np.ndarray
    price_shares: np.ndarray
    holdings: np.ndarray
    log_prev_total_wealth: float = field(default=float("nan"))

    @classmethod
    def initial(cls, initial_wealths, n_assets: int) -> "MarketState":
        y0 = np.asarray(initial_wealths, dtype=float)
        w0 = float(y0.sum())
        return cls(
            t=0,
            relative=RelativeWealth(np.log(y0 / w0)),
            log_total_wealth=float(np.log(w0)),
            log_total_payoff=float(np.log(w0)),
            payoff_shares=np.zeros(n_assets),
            price_shares=np.zeros(n_assets),
            holdings=np.zeros((y0.size, n_assets)),
        )

    @property
    def n_investors(self) -> int:
        return self.relative.log_shares.size

    @property
    def log_shares(self) -> np.ndarray:
        return self.relative.log_shares

    @property
    def shares(self) -> np.ndarray:
        return self.relative.shares

    @property
    def log_wealths(self) -> np.ndarray:
        return self.relative.log_shares + self.log_total_wealth

    @property
    def wealths(self) -> np.ndarray:
        return np.exp(self.log_wealths)

    @property
    def total_wealth(self) -> float:
        return float(np.exp(self.log_total_wealth))

    @property
    def payoffs(self) -> np.ndarray:
        if self.t == 0:
            return np.zeros_like(self.payoff_shares)
        return self.payoff_shares * np.exp(self.log_total_payoff)

    @property
    def prices(self) -> np.ndarray:
        if self.t == 0:
            return np.zeros_like(self.price_shares)
        return self.price_shares * np.exp(self.log_prev_total_wealth)
