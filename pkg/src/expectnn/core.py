"""Asymmetric least-squares loss, expectiles and the risk sandwich oracles.

Everything here is a pure function of its arguments. Discrete
distributions are the substrate for the excess-risk bounds: for any
distribution ``Q`` with expectile ``t*``,

    c_tau (t - t*)^2 <= C(t) - C(t*) <= C_tau (t - t*)^2

with ``c_tau = min(tau, 1 - tau)`` and ``C_tau = max(tau, 1 - tau)``.
Integrating the pointwise bound over a finite covariate distribution
gives the two-sided L2 bound checked by :func:`theorem1_check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

EXPECTILE_TOL = 1e-10
EXPECTILE_MAX_ITER = 200
SANDWICH_SLACK = 1e-9


@dataclass(frozen=True)
class ExpectileLevel:
    tau: float

    def __post_init__(self):
        tau = float(self.tau)
        if not (0.0 < tau < 1.0):
            raise ValueError(f"expectile level must lie strictly inside (0, 1), got {self.tau!r}")
        object.__setattr__(self, "tau", tau)

    @property
    def c_low(self) -> float:
        """min(tau, 1 - tau), the curvature lower constant."""
        return min(self.tau, 1.0 - self.tau)

    @property
    def c_high(self) -> float:
        """max(tau, 1 - tau), the curvature upper constant."""
        return max(self.tau, 1.0 - self.tau)

    def __float__(self):
        return self.tau


TauLike = Union[float, ExpectileLevel]


def as_level(tau: TauLike) -> ExpectileLevel:
    if isinstance(tau, ExpectileLevel):
        return tau
    return ExpectileLevel(tau)


@dataclass(frozen=True)
class DiscreteDist:
    """Finite distribution over real support points."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if support.size == 0 or support.size != probs.size:
            raise ValueError("support and probs must be nonempty and of equal length")
        if not np.all(np.isfinite(support)):
            raise ValueError("support values must be finite")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        support.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, values: Sequence[float]) -> "DiscreteDist":
        values = np.asarray(values, dtype=float).ravel()
        return cls(values, np.full(values.size, 1.0 / values.size))

    @classmethod
    def point_mass(cls, value: float) -> "DiscreteDist":
        return cls([value], [1.0])

    def shifted(self, c: float) -> "DiscreteDist":
        return DiscreteDist(self.support + c, self.probs)


@dataclass(frozen=True)
class FinitePXY:
    """Joint distribution on a finite covariate set with discrete conditionals."""

    x_points: tuple
    x_probs: np.ndarray
    cond: tuple

    def __post_init__(self):
        x_probs = np.asarray(self.x_probs, dtype=float).ravel()
        cond = tuple(self.cond)
        x_points = tuple(self.x_points)
        if x_probs.size == 0 or not (len(x_points) == len(cond) == x_probs.size):
            raise ValueError("need one probability and one conditional per x point")
        if np.any(x_probs < 0) or abs(x_probs.sum() - 1.0) > 1e-12:
            raise ValueError("x_probs must be nonnegative and sum to 1")
        if not all(isinstance(q, DiscreteDist) for q in cond):
            raise TypeError("conditionals must be DiscreteDist instances")
        x_probs.setflags(write=False)
        object.__setattr__(self, "x_points", x_points)
        object.__setattr__(self, "x_probs", x_probs)
        object.__setattr__(self, "cond", cond)

    def expectile_function(self, tau: TauLike) -> np.ndarray:
        """Tabulated conditional expectile, one value per x point."""
        return np.array([dist_expectile(q, tau) for q in self.cond])


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite input {v!r}")


def als_loss(y: float, t: float, tau: TauLike) -> float:
    _check_finite(y, t)
    tau = as_level(tau).tau
    r = y - t
    w = (1.0 - tau) if y < t else tau
    return w * r * r


def als_loss_dt(y: float, t: float, tau: TauLike) -> float:
    """Derivative of :func:`als_loss` in the prediction ``t`` (0 at ``t == y``)."""
    _check_finite(y, t)
    tau = as_level(tau).tau
    w = (1.0 - tau) if y < t else tau
    return 2.0 * w * (t - y)


def als_loss_array(y, t, tau: float) -> np.ndarray:
    """Vectorised loss; no finiteness validation."""
    r = np.asarray(y, dtype=float) - np.asarray(t, dtype=float)
    w = np.where(r < 0, 1.0 - tau, tau)
    return w * r * r


def als_loss_dt_array(y, t, tau: float) -> np.ndarray:
    r = np.asarray(y, dtype=float) - np.asarray(t, dtype=float)
    w = np.where(r < 0, 1.0 - tau, tau)
    return -2.0 * w * r


def _weighted_expectile(y: np.ndarray, p: np.ndarray, tau: float) -> float:
    # Asymmetric-weighted mean iteration: each step is the exact minimiser of
    # the quadratic that agrees with the inner risk on the current partition,
    # so a repeated partition means the exact root has been reached.
    t = float(np.dot(p, y))
    upper = None
    for _ in range(EXPECTILE_MAX_ITER):
        above = y >= t
        if upper is not None and np.array_equal(above, upper):
            return t
        upper = above
        w = np.where(above, tau, 1.0 - tau) * p
        t_new = float(np.dot(w, y) / w.sum())
        if abs(t_new - t) <= EXPECTILE_TOL:
            return t_new
        t = t_new
    return _bisect_expectile(y, p, tau)


def _bisect_expectile(y: np.ndarray, p: np.ndarray, tau: float) -> float:
    def score(t):
        r = y - t
        return float(np.dot(p, np.where(r >= 0, tau, 1.0 - tau) * r))

    lo, hi = float(y.min()), float(y.max())
    while hi - lo > EXPECTILE_TOL:
        mid = 0.5 * (lo + hi)
        if score(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def empirical_expectile(samples: Sequence[float], tau: TauLike) -> float:
    y = np.asarray(samples, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empirical_expectile needs at least one sample")
    if not np.all(np.isfinite(y)):
        raise ValueError("samples must be finite")
    tau = as_level(tau).tau
    t = _weighted_expectile(y, np.full(y.size, 1.0 / y.size), tau)
    return min(max(t, float(y.min())), float(y.max()))


def dist_expectile(q: DiscreteDist, tau: TauLike) -> float:
    tau = as_level(tau).tau
    keep = q.probs > 0
    y, p = q.support[keep], q.probs[keep]
    t = _weighted_expectile(y, p, tau)
    return min(max(t, float(y.min())), float(y.max()))


def inner_risk(q: DiscreteDist, t: float, tau: TauLike) -> float:
    _check_finite(t)
    tau = as_level(tau).tau
    return float(np.dot(q.probs, als_loss_array(q.support, t, tau)))


@dataclass(frozen=True)
class Lemma1Result:
    lower: float
    excess: float
    upper: float
    holds: bool
    t_star: float


def lemma1_check(q: DiscreteDist, t: float, tau: TauLike) -> Lemma1Result:
    level = as_level(tau)
    t_star = dist_expectile(q, level)
    excess = inner_risk(q, t, level) - inner_risk(q, t_star, level)
    d2 = (t - t_star) ** 2
    lower, upper = level.c_low * d2, level.c_high * d2
    holds = lower - SANDWICH_SLACK <= excess <= upper + SANDWICH_SLACK
    return Lemma1Result(lower, excess, upper, bool(holds), t_star)


@dataclass(frozen=True)
class Theorem1Result:
    lhs: float
    l2_dist: float
    rhs: float
    holds: bool
    excess_risk: float


def theorem1_check(p: FinitePXY, f, tau: TauLike) -> Theorem1Result:
    """Two-sided L2(P_x) bound for a tabulated predictor ``f``.

    ``f`` is either a sequence aligned with ``p.x_points`` or a mapping
    keyed by the x points themselves.
    """
    level = as_level(tau)
    if isinstance(f, Mapping):
        fx = np.array([f[x] for x in p.x_points], dtype=float)
    else:
        fx = np.asarray(f, dtype=float).ravel()
    if fx.size != len(p.x_points):
        raise ValueError("f must be defined at every x point")
    f_star = p.expectile_function(level)
    l2 = math.sqrt(float(np.dot(p.x_probs, (fx - f_star) ** 2)))
    excess = sum(
        w * (inner_risk(q, a, level) - inner_risk(q, b, level))
        for w, q, a, b in zip(p.x_probs, p.cond, fx, f_star)
    )
    root = math.sqrt(max(excess, 0.0))
    lhs = root / math.sqrt(level.c_high)
    rhs = root / math.sqrt(level.c_low)
    holds = lhs - SANDWICH_SLACK <= l2 <= rhs + SANDWICH_SLACK
    return Theorem1Result(lhs, l2, rhs, bool(holds), float(excess))


def random_discrete_dist(rng: np.random.Generator, max_atoms: int = 10, scale: float = 5.0) -> DiscreteDist:
    k = int(rng.integers(1, max_atoms + 1))
    support = rng.normal(0.0, scale, size=k)
    probs = rng.dirichlet(np.ones(k))
    probs = probs / probs.sum()
    return DiscreteDist(support, probs)


def random_finite_pxy(rng: np.random.Generator, max_points: int = 8, max_atoms: int = 10) -> FinitePXY:
    m = int(rng.integers(1, max_points + 1))
    x_probs = rng.dirichlet(np.ones(m))
    cond = tuple(random_discrete_dist(rng, max_atoms) for _ in range(m))
    return FinitePXY(tuple(range(m)), x_probs / x_probs.sum(), cond)


BOUNDS_TAUS = (0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99)


def bounds_suite(trials: int, seed: int = 0, taus: Sequence[float] = BOUNDS_TAUS) -> dict:
    """Run both sandwich checks on ``trials`` seeded random instances each.

    Levels cycle through ``taus``. Margins are the distance to the nearer
    bound (negative means a violation).
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    levels = [as_level(t) for t in taus]
    lemma_pass = theorem_pass = 0
    lemma_margin = theorem_margin = math.inf
    failures = []
    for i in range(trials):
        level = levels[i % len(levels)]
        q = random_discrete_dist(rng)
        t = float(rng.uniform(-10.0, 10.0))
        r = lemma1_check(q, t, level)
        lemma_pass += r.holds
        lemma_margin = min(lemma_margin, r.excess - r.lower, r.upper - r.excess)
        if not r.holds:
            failures.append({"check": "lemma1", "trial": i, "tau": level.tau, "t": t})

        pxy = random_finite_pxy(rng)
        f_star = pxy.expectile_function(level)
        spread = 10.0 ** rng.uniform(-3.0, 1.0)
        f = f_star + rng.normal(0.0, spread, size=f_star.size)
        r2 = theorem1_check(pxy, f, level)
        theorem_pass += r2.holds
        theorem_margin = min(theorem_margin, r2.l2_dist - r2.lhs, r2.rhs - r2.l2_dist)
        if not r2.holds:
            failures.append({"check": "theorem1", "trial": i, "tau": level.tau})
    return {
        "trials": trials,
        "seed": seed,
        "taus": [lv.tau for lv in levels],
        "lemma1_passed": lemma_pass,
        "theorem1_passed": theorem_pass,
        "lemma1_worst_margin": lemma_margin,
        "theorem1_worst_margin": theorem_margin,
        "slack": SANDWICH_SLACK,
        "failures": failures,
        "ok": lemma_pass == trials and theorem_pass == trials,
    }
