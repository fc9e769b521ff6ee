"""The separation penalty f(a).

f(a) is the largest expected log growth of sum_n lam^n R^n / lam*^n over
proportions ``lam`` at L2 distance at least ``a`` from lambda*.

The objective g is concave with its global maximum g(lambda*) = 0, so along
any ray leaving lambda* it only decreases: the supremum sits on the sphere
||lam - lambda*|| = a, restricted to the simplex.  For two assets that set has
at most two points.  For more assets we run projected gradient ascent on the
sphere-simplex intersection from a deterministic set of starting directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import l2_norm, project_simplex
from ..errors import LinearDependence
from ..payoffs import RelativePayoffSpec

INFEASIBLE = -1.0


@dataclass(frozen=True, eq=False)
class FofA:
    a: float
    value: float
    argmax: Optional[np.ndarray]
    feasible: bool = True
    multistarts: int = 0
    saa_samples: int = 0
    saa_se: float = 0.0
    candidates: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "f_a": self.value,
            "argmax": None if self.argmax is None else self.argmax.tolist(),
            "feasible": self.feasible,
            "multistarts": self.multistarts,
            "saa_samples": self.saa_samples,
            "saa_se": self.saa_se,
        }


class LogRatioObjective:
    """g(lam) = E ln sum_n lam^n R^n / lam*^n.

    Finite supports are summed exactly.  Dirichlet payoffs use one frozen
    sample (common random numbers), so g is deterministic across calls.
    On a sample we average ln z - (z - 1) with z = sum lam R / lam*: the
    subtracted term has mean exactly zero on the simplex, it removes the
    sampling noise in the slope at lambda*, and the summand is <= 0, so the
    sample objective keeps the exact maximum g(lambda*) = 0.
    """

    def __init__(self, rel: RelativePayoffSpec, saa_samples: int = 200_000, seed: int = 0):
        self.lambda_star = np.asarray(rel.mean)
        support = rel.support()
        if support is None:
            gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
            points = rel.draw(gen, saa_samples)
            weights = np.full(saa_samples, 1.0 / saa_samples)
            self.saa_samples = saa_samples
        else:
            points, weights = support
            self.saa_samples = 0
        self.scaled = points / self.lambda_star
        self.weights = weights

    def _inner(self, lam) -> np.ndarray:
        return self.scaled @ np.asarray(lam, dtype=float)

    def _terms(self, z):
        with np.errstate(divide="ignore"):
            logs = np.log(z)
        return logs - (z - 1.0) if self.saa_samples else logs

    def value(self, lam) -> float:
        terms = self._terms(self._inner(lam))
        pos = self.weights > 0
        if np.any(~np.isfinite(terms[pos])):
            return -math.inf
        return float(self.weights[pos] @ terms[pos])

    def grad(self, lam) -> np.ndarray:
        z = self._inner(lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            dz = 1.0 / z - 1.0 if self.saa_samples else 1.0 / z
            g = (self.weights * dz) @ self.scaled
        return np.where(np.isfinite(g), g, 0.0)

    def standard_error(self, lam) -> float:
        if not self.saa_samples:
            return 0.0
        terms = self._terms(self._inner(lam))
        return float(terms.std(ddof=1) / math.sqrt(terms.size))


def max_separation(lambda_star) -> float:
    """Largest L2 distance from lambda* to a point of the simplex (a vertex)."""
    ls = np.asarray(lambda_star, dtype=float)
    return float(max(l2_norm(np.eye(ls.size)[n] - ls) for n in range(ls.size)))


def _retract(y, center, a, iters: int = 2000, tol: float = 1e-12):
    """A point of simplex ∩ sphere(center, a) near ``y`` by alternating projections."""
    x = np.asarray(y, dtype=float)
    for _ in range(iters):
        x = project_simplex(x)
        d = x - center
        nd = l2_norm(d)
        if nd == 0.0:
            return None
        if abs(nd - a) <= tol * max(1.0, a):
            return x
        x = center + a * d / nd
        if x.min() >= 0.0:
            return x
    return None


def _ascend(obj: LogRatioObjective, x, a, tol, max_iter=5000):
    center = obj.lambda_star
    fx = obj.value(x)
    eta = 0.1
    for _ in range(max_iter):
        y = _retract(x + eta * obj.grad(x), center, a)
        fy = obj.value(y) if y is not None else -math.inf
        if fy > fx:
            gain = fy - fx
            x, fx = y, fy
            eta = min(eta * 2.0, 10.0)
            if gain <= tol * (1.0 + abs(fx)):
                break
        else:
            eta *= 0.5
            if eta < 1e-15:
                break
    return x, fx


def _start_directions(n: int, count: int, seed: int) -> list[np.ndarray]:
    eye = np.eye(n)
    dirs = [eye[k] - 1.0 / n for k in range(n)] + [1.0 / n - eye[k] for k in range(n)]
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    while len(dirs) < count:
        v = gen.standard_normal(n)
        dirs.append(v - v.mean())
    return dirs[:max(count, 1)]


def compute_f(rel: RelativePayoffSpec, a: float, saa_samples: int = 200_000,
              multistarts: int = 32, tol: float = 1e-13, seed: int = 0) -> FofA:
    """Maximize g over the simplex outside the open ball of radius ``a`` around lambda*.

    Returns the sentinel value -1 (``feasible=False``) when no point of the
    simplex is that far from lambda*.
    """
    if not rel.linearly_independent:
        raise LinearDependence("relative payoffs have linearly dependent components")
    if not a > 0:
        raise ValueError("separation radius must be positive")
    lam_star = np.asarray(rel.mean)
    n = lam_star.size
    if a > max_separation(lam_star):
        return FofA(float(a), INFEASIBLE, None, feasible=False)
    obj = LogRatioObjective(rel, saa_samples, seed)

    if n == 2:
        step = a / math.sqrt(2.0) * np.array([1.0, -1.0])
        cands = [lam_star + step, lam_star - step]
        cands = [np.clip(c, 0.0, None) for c in cands if c.min() >= -1e-15]
        found = [(obj.value(c), c) for c in cands]
        starts = 0
    else:
        found = []
        dirs = _start_directions(n, multistarts, seed)
        for d in dirs:
            nd = l2_norm(d)
            if nd == 0:
                continue
            x0 = _retract(lam_star + a * d / nd, lam_star, a)
            if x0 is None or not math.isfinite(obj.value(x0)):
                continue
            found.append(_ascend(obj, x0, a, tol)[::-1])
        starts = len(dirs)
    value, best = max(found, key=lambda p: p[0])
    return FofA(float(a), float(value), best, True, starts, obj.saa_samples,
                obj.standard_error(best), candidates=found)
