"""Payoff generators with the growth / relative-payoff factorization.

Each period the total payoff is multiplied by a growth factor ``rho_t`` and
split between assets according to a simplex-valued ``R_t``.  Both are drawn
i.i.d. from one of a few families chosen so that every constant needed
downstream (theta, sigma, lambda*, epsilon) has an exact value.

Randomness comes from :class:`PathRng`: one Philox (counter-based) stream per
source, keyed by ``(seed, path_index)``.  Drawing a block of ``n`` steps
consumes a stream exactly like ``n`` single-step draws, so a path's values do
not depend on how the simulator chunks its work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import SimplexVector, make_simplex
from .errors import ConfigInvalid, NonPositiveDrift, NonPositiveMass


class PathRng:
    """Independent reproducible streams for one Monte Carlo path."""

    __slots__ = ("seed", "index", "growth", "relative", "strategy")

    def __init__(self, seed: int, index: int = 0):
        self.seed = int(seed)
        self.index = int(index)
        root = np.random.SeedSequence(self.seed, spawn_key=(self.index,))
        g, r, s = root.spawn(3)
        self.growth = np.random.Generator(np.random.Philox(g))
        self.relative = np.random.Generator(np.random.Philox(r))
        self.strategy = np.random.Generator(np.random.Philox(s))

    def __repr__(self):
        return f"PathRng(seed={self.seed}, index={self.index})"


def as_path_rng(rng) -> PathRng:
    if isinstance(rng, PathRng):
        return rng
    if rng is None:
        raise ValueError("an explicit seed or PathRng is required")
    return PathRng(int(rng), 0)


def _check_probs(probs, k: int) -> np.ndarray:
    p = np.asarray(probs, dtype=float).ravel()
    if p.size != k:
        raise ConfigInvalid(f"expected {k} probabilities, got {p.size}")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0, rtol=0, atol=1e-9):
        raise ConfigInvalid(f"probabilities must be nonnegative and sum to 1: {p.tolist()}")
    return p / p.sum()


def _draw_index(gen: np.random.Generator, cdf: np.ndarray, size):
    u = gen.random(size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


@dataclass(frozen=True, eq=False)
class GrowthSpec:
    """Distribution of the growth factor rho_t > 0."""

    kind: str
    values: tuple = ()
    probs: tuple = ()
    mu: float = 0.0
    sigma_ln: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "discrete", "lognormal"):
            raise ConfigInvalid(f"unknown growth kind {self.kind!r}")
        if self.kind == "lognormal":
            if not (math.isfinite(self.mu) and math.isfinite(self.sigma_ln)) or self.sigma_ln < 0:
                raise ConfigInvalid("lognormal growth needs finite mu and sigma >= 0")
        else:
            v = np.asarray(self.values, dtype=float)
            if v.size == 0 or np.any(~np.isfinite(v)) or np.any(v <= 0):
                raise ConfigInvalid("growth factors must be finite and positive")
        if self.theta <= 0:
            raise NonPositiveDrift(f"E ln rho = {self.theta:.6g} must be positive")

    @classmethod
    def constant(cls, rho: float) -> "GrowthSpec":
        return cls("constant", values=(float(rho),), probs=(1.0,))

    @classmethod
    def discrete(cls, values, probs) -> "GrowthSpec":
        v = tuple(float(x) for x in values)
        p = tuple(_check_probs(probs, len(v)).tolist())
        return cls("discrete", values=v, probs=p)

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "GrowthSpec":
        return cls("lognormal", mu=float(mu), sigma_ln=float(sigma))

    @property
    def theta(self) -> float:
        if self.kind == "lognormal":
            return self.mu
        return float(np.dot(self.probs, np.log(self.values)))

    @property
    def sigma(self) -> float:
        if self.kind == "lognormal":
            return self.sigma_ln
        lv = np.log(self.values)
        var = float(np.dot(self.probs, (lv - self.theta) ** 2))
        return math.sqrt(max(var, 0.0))

    def support(self):
        """(values, probs) for finite families, ``None`` for lognormal."""
        if self.kind == "lognormal":
            return None
        return np.asarray(self.values), np.asarray(self.probs)

    def draw(self, gen: np.random.Generator, size=None):
        if self.kind == "constant":
            return self.values[0] if size is None else np.full(size, self.values[0])
        if self.kind == "discrete":
            idx = _draw_index(gen, np.cumsum(self.probs), size)
            return np.asarray(self.values)[idx]
        z = gen.standard_normal(size)
        return np.exp(self.mu + self.sigma_ln * z)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.values[0]}
        if self.kind == "discrete":
            return {"kind": "discrete", "values": list(self.values), "probs": list(self.probs)}
        return {"kind": "lognormal", "mu": self.mu, "sigma": self.sigma_ln}

    @classmethod
    def from_dict(cls, d: dict) -> "GrowthSpec":
        kind = d.get("kind")
        if kind == "constant":
            return cls.constant(d["value"])
        if kind == "discrete":
            return cls.discrete(d["values"], d["probs"])
        if kind == "lognormal":
            return cls.lognormal(d["mu"], d["sigma"])
        raise ConfigInvalid(f"unknown growth kind {kind!r}")


@dataclass(frozen=True, eq=False)
class RelativePayoffSpec:
    """Distribution of the relative payoff vector R_t on the simplex."""

    kind: str
    alpha: tuple = ()
    points: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("dirichlet", "discrete", "constant"):
            raise ConfigInvalid(f"unknown relative payoff kind {self.kind!r}")
        if self.kind == "dirichlet":
            a = np.asarray(self.alpha, dtype=float)
            if a.size < 2 or np.any(~np.isfinite(a)) or np.any(a <= 0):
                raise ConfigInvalid("dirichlet concentration must be positive with N >= 2")
        if self.epsilon <= 0:
            raise NonPositiveMass("every asset needs a positive expected relative payoff")

    @classmethod
    def dirichlet(cls, alpha) -> "RelativePayoffSpec":
        return cls("dirichlet", alpha=tuple(float(x) for x in alpha))

    @classmethod
    def discrete(cls, points, probs) -> "RelativePayoffSpec":
        pts = tuple(make_simplex(p) for p in points)
        if len({p.n for p in pts}) != 1:
            raise ConfigInvalid("support points must share one dimension")
        p = tuple(_check_probs(probs, len(pts)).tolist())
        return cls("discrete", points=pts, probs=p)

    @classmethod
    def constant(cls, weights) -> "RelativePayoffSpec":
        return cls("constant", points=(make_simplex(weights),), probs=(1.0,))

    @property
    def n_assets(self) -> int:
        return len(self.alpha) if self.kind == "dirichlet" else self.points[0].n

    @property
    def mean(self) -> SimplexVector:
        """lambda* = E R_1, exact."""
        if self.kind == "dirichlet":
            a = np.asarray(self.alpha)
            return SimplexVector(a / a.sum())
        pts, p = self.support()
        return SimplexVector(p @ pts)

    @property
    def epsilon(self) -> float:
        return self.mean.min()

    @property
    def linearly_independent(self) -> bool:
        if self.kind == "dirichlet":
            return True
        pts, p = self.support()
        pts = pts[p > 0]
        return int(np.linalg.matrix_rank(pts)) == self.n_assets

    def support(self):
        """(points K x N, probs) for finite families, ``None`` for dirichlet."""
        if self.kind == "dirichlet":
            return None
        return np.array([np.asarray(q) for q in self.points]), np.asarray(self.probs)

    def draw(self, gen: np.random.Generator, size=None):
        shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
        if self.kind == "dirichlet":
            g = gen.standard_gamma(np.asarray(self.alpha), size=shape + (self.n_assets,))
            return g / g.sum(axis=-1, keepdims=True)
        pts, p = self.support()
        if self.kind == "constant":
            return np.broadcast_to(pts[0], shape + (self.n_assets,)).copy()
        idx = _draw_index(gen, np.cumsum(p), shape if shape else None)
        return pts[idx]

    def to_dict(self) -> dict:
        if self.kind == "dirichlet":
            return {"kind": "dirichlet", "alpha": list(self.alpha)}
        if self.kind == "constant":
            return {"kind": "constant", "weights": self.points[0].tolist()}
        return {"kind": "discrete", "points": [q.tolist() for q in self.points],
                "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, d: dict) -> "RelativePayoffSpec":
        kind = d.get("kind")
        if kind == "dirichlet":
            return cls.dirichlet(d["alpha"])
        if kind == "discrete":
            return cls.discrete(d["points"], d["probs"])
        if kind == "constant":
            return cls.constant(d["weights"])
        raise ConfigInvalid(f"unknown relative payoff kind {kind!r}")


@dataclass(frozen=True)
class PayoffStep:
    rho: float
    relative: SimplexVector

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")


def draw_step(growth: GrowthSpec, rel: RelativePayoffSpec, rng) -> PayoffStep:
    rng = as_path_rng(rng)
    rho = float(growth.draw(rng.growth))
    return PayoffStep(rho, SimplexVector(rel.draw(rng.relative)))


def draw_block(growth: GrowthSpec, rel: RelativePayoffSpec, rng: PathRng, n: int):
    """``n`` consecutive steps as arrays ``(rho[n], R[n, N])``."""
    return np.asarray(growth.draw(rng.growth, n), dtype=float), rel.draw(rng.relative, n)


def payoff_vector(step: PayoffStep, prev_log_total: float):
    """Absolute payoffs X_t and the new log total payoff.

    ``prev_log_total`` is ln of the previous total payoff (ln W_0 at t = 1).
    """
    new_total = prev_log_total + math.log(step.rho)
    return np.asarray(step.relative) * math.exp(new_total), new_total


def growth_stats(growth: GrowthSpec) -> tuple[float, float]:
    """Exact (theta, sigma) of ln rho."""
    theta = growth.theta
    if theta <= 0:
        raise NonPositiveDrift(f"E ln rho = {theta} must be positive")
    return theta, growth.sigma


class ScaledPayoffs(NamedTuple):
    shares: np.ndarray
    log_scale: float

    @property
    def values(self) -> np.ndarray:
        return self.shares * math.exp(self.log_scale)


def example1_payoffs(relative, rho: float, t: int) -> ScaledPayoffs:
    """Deterministic payoffs X_t = R * rho**t with W_0 = 1."""
    if t < 1 or not rho > 1:
        raise ValueError("need t >= 1 and rho > 1")
    r = make_simplex(relative)
    if r.min() <= 0:
        raise ValueError("every relative payoff must be positive")
    return ScaledPayoffs(np.asarray(r).copy(), t * math.log(rho))


def example1_specs(relative, rho: float) -> tuple[GrowthSpec, RelativePayoffSpec]:
    """The deterministic model as degenerate growth/relative specs."""
    return GrowthSpec.constant(rho), RelativePayoffSpec.constant(relative)
