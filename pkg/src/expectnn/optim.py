"""Dense BFGS with a strong-Wolfe line search, plus multi-start initialisation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg.blas import dsymv, dsyr2

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]

CURVATURE_EPS = 1e-10
MAX_LINE_SEARCH_EVALS = 50


class NonFiniteObjective(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimOptions:
    max_iters: int = 500
    grad_tol: float = 1e-6
    rel_obj_tol: float = 1e-9
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    n_starts: int = 10
    warmup_iters: int = 5
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0):
            raise ValueError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if self.max_iters < 1 or self.n_starts < 1:
            raise ValueError("max_iters and n_starts must be at least 1")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be nonnegative")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass
class OptimResult:
    x_final: np.ndarray
    f_final: float
    grad_norm_final: float
    iterations: int
    converged: bool
    f_trace: List[float] = field(default_factory=list)
    message: str = ""

    def summary(self) -> dict:
        return {
            "f_final": self.f_final,
            "grad_norm_final": self.grad_norm_final,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
        }


def _finite(f, g) -> bool:
    return np.isfinite(f) and bool(np.all(np.isfinite(g)))


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic through two points with slopes, or None."""
    if a == b:
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def wolfe_line_search(fun: Objective, x, f0, g0, d, c1=1e-4, c2=0.9, alpha0=1.0, max_evals=MAX_LINE_SEARCH_EVALS):
    """Strong-Wolfe search along ``d``.

    Returns ``(ok, alpha, f, g, best)`` where ``best`` is the lowest
    ``(alpha, f, g)`` seen, used when the search fails.
    """
    dphi0 = float(g0 @ d)
    evals = 0
    best = (0.0, f0, g0)

    def phi(alpha):
        nonlocal evals, best
        evals += 1
        f, g = fun(x + alpha * d)
        if not _finite(f, g):
            return np.inf, None, np.inf
        if f < best[1]:
            best = (alpha, f, g)
        return f, g, float(g @ d)

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while evals < max_evals:
            trial = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                trial = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            span = abs(hi - lo)
            if trial is None or not np.isfinite(trial) or not (min(lo, hi) + 0.1 * span <= trial <= max(lo, hi) - 0.1 * span):
                trial = 0.5 * (lo + hi)
            f_t, g_t, d_t = phi(trial)
            if f_t > f0 + c1 * trial * dphi0 or f_t >= f_lo:
                hi, f_hi, d_hi = trial, f_t, d_t
            else:
                if abs(d_t) <= -c2 * dphi0:
                    return True, trial, f_t, g_t
                if d_t * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = trial, f_t, d_t
            if span < 1e-16 * max(1.0, abs(lo)):
                break
        return False, None, None, None

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    alpha = alpha0
    while evals < max_evals:
        f_a, g_a, d_a = phi(alpha)
        if f_a > f0 + c1 * alpha * dphi0 or (evals > 1 and f_a >= f_prev):
            ok, a, f, g = zoom(a_prev, f_prev, d_prev, alpha, f_a, d_a)
            return ok, a, f, g, best
        if abs(d_a) <= -c2 * dphi0:
            return True, alpha, f_a, g_a, best
        if d_a >= 0:
            ok, a, f, g = zoom(alpha, f_a, d_a, a_prev, f_prev, d_prev)
            return ok, a, f, g, best
        a_prev, f_prev, d_prev = alpha, f_a, d_a
        alpha *= 2.0
    return False, None, None, None, best


def bfgs_minimize(fun: Objective, x0, opts: Optional[OptimOptions] = None) -> OptimResult:
    """Minimise ``fun`` (returning value and gradient) from ``x0``.

    Stops when the gradient norm drops below ``grad_tol`` or one step
    improves the objective by less than ``rel_obj_tol`` relative to
    ``max(|f|, 1)``.
    """
    opts = opts or OptimOptions()
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not _finite(f, g):
        raise NonFiniteObjective(f"objective or gradient not finite at the starting point (f={f!r})")
    f = float(f)
    n = x.size
    # inverse Hessian; only the upper triangle is maintained
    H = np.asfortranarray(np.eye(n))
    scaled = False
    trace = [f]
    gnorm = float(np.linalg.norm(g))
    converged = gnorm < opts.grad_tol
    message = "gradient tolerance reached" if converged else "iteration limit reached"
    iterations = 0

    while not converged and iterations < opts.max_iters:
        d = dsymv(-1.0, H, g)
        if not float(g @ d) < 0:
            H = np.asfortranarray(np.eye(n))
            scaled = False
            d = -g
        alpha0 = 1.0
        if iterations == 0:
            alpha0 = min(1.0, 1.0 / max(gnorm, 1e-300))
        ok, alpha, f_new, g_new, best = wolfe_line_search(fun, x, f, g, d, opts.wolfe_c1, opts.wolfe_c2, alpha0)
        if not ok:
            # usually roundoff in f near the optimum; keep any decrease found
            alpha, f_new, g_new = best
            if not f_new < f:
                message = "line search failed"
                log.debug("line search failed at iteration %d (f=%g, |g|=%g)", iterations, f, gnorm)
                break
        s = alpha * d
        yv = g_new - g
        f_old = f
        x = x + s
        f, g = float(f_new), g_new
        trace.append(f)
        iterations += 1
        gnorm = float(np.linalg.norm(g))
        if gnorm < opts.grad_tol:
            converged, message = True, "gradient tolerance reached"
            break
        if f_old - f <= opts.rel_obj_tol * max(abs(f_old), abs(f), 1.0):
            converged, message = True, "relative objective tolerance reached"
            break
        sy = float(s @ yv)
        if sy > CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(yv):
            if not scaled:
                H = np.asfortranarray(np.eye(n) * (sy / float(yv @ yv)))
                scaled = True
            rho = 1.0 / sy
            Hy = dsymv(1.0, H, yv)
            # H + c s s' - rho (Hy s' + s Hy') as one symmetric rank-2 update
            v = 0.5 * (rho * rho * float(yv @ Hy) + rho) * s - rho * Hy
            H = dsyr2(1.0, s, v, a=H, overwrite_a=True)

    return OptimResult(x, f, gnorm, iterations, bool(converged), trace, message)


def _draw_starts(rng: np.random.Generator, n_starts: int, dim: int, free) -> np.ndarray:
    starts = rng.uniform(-1.0, 1.0, size=(n_starts, dim))
    if free is not None:
        starts[:, ~np.asarray(free, dtype=bool)] = 0.0
    return starts


def multi_start(fun: Objective, dim: int, opts: Optional[OptimOptions] = None, free=None) -> OptimResult:
    """Draw ``n_starts`` U[-1, 1] starts, warm each up briefly, then run
    BFGS to convergence from the start whose warmed-up loss is lowest.

    ``free`` optionally marks which coordinates may move; the rest start
    (and, given a zero gradient there, stay) at exactly zero.
    """
    opts = opts or OptimOptions()
    if dim < 1:
        raise ValueError("dim must be at least 1")
    rng = np.random.default_rng(int(opts.seed))
    starts = _draw_starts(rng, opts.n_starts, dim, free)
    if opts.n_starts == 1:
        return bfgs_minimize(fun, starts[0], opts)
    warm_opts = replace(opts, max_iters=max(opts.warmup_iters, 1))
    scores = np.full(opts.n_starts, np.inf)
    for i, x0 in enumerate(starts):
        try:
            scores[i] = bfgs_minimize(fun, x0, warm_opts).f_final if opts.warmup_iters > 0 else fun(x0)[0]
        except NonFiniteObjective:
            log.debug("start %d rejected: non-finite objective", i)
    if not np.any(np.isfinite(scores)):
        raise NonFiniteObjective("objective non-finite at every start")
    return bfgs_minimize(fun, starts[int(np.argmin(scores))], opts)
