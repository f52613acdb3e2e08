"""Limited-memory BFGS with a strong-Wolfe line search and box projection."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyReport
from .gradient import Objective
from .params import ParameterSet

log = logging.getLogger(__name__)

CURVATURE_EPS = 1e-10
PROJECTION_EPS = 1e-12


@dataclass
class LbfgsConfig:
    max_iters: int = 20
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 20
    initial_step: float = 1.0
    ftol: float = 1e-6
    gtol: float = 1e-6


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    reason: str
    history: list = field(default_factory=list)


class LbfgsState:
    """Curvature pair memory and the two-loop recursion."""

    def __init__(self, memory: int):
        self.memory = memory
        self.pairs: deque = deque(maxlen=memory)

    def clear(self):
        self.pairs.clear()

    def push(self, s: np.ndarray, y: np.ndarray) -> bool:
        sy = float(s @ y)
        if sy <= CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
            return False
        self.pairs.append((s, y, 1.0 / sy))
        return True

    def direction(self, g: np.ndarray) -> np.ndarray:
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * (s @ q)
            q -= a * y
            alphas.append(a)
        if self.pairs:
            s, y, _ = self.pairs[-1]
            q *= (s @ y) / (y @ y)
        else:
            q *= min(1.0, 1.0 / max(np.sum(np.abs(g)), 1e-300))
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q


def _cubic_step(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating two points, or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def strong_wolfe(phi, f0: float, d0: float, step: float = 1.0, c1: float = 1e-4,
                 c2: float = 0.9, max_evals: int = 20):
    """Find a step satisfying the strong Wolfe conditions along a descent ray.

    ``phi(a)`` returns ``(f, slope, payload)``.  Returns
    ``(step, f, payload, ok, best)`` where ``best`` is the lowest trial seen.
    """
    evals = 0
    best = None

    def probe(a):
        nonlocal evals, best
        evals += 1
        f, d, payload = phi(a)
        if best is None or f < best[1]:
            best = (a, f, payload)
        return f, d, payload

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        while evals < max_evals:
            a = _cubic_step(lo, flo, dlo, hi, fhi, dhi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if a is None or not (left + margin <= a <= right - margin):
                a = 0.5 * (lo + hi)
            f, d, payload = probe(a)
            if f > f0 + c1 * a * d0 or f >= flo:
                hi, fhi, dhi = a, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return a, f, payload, True
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, f, d
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = step
    found = None
    while evals < max_evals:
        f, d, payload = probe(a)
        if not np.isfinite(f) or f > f0 + c1 * a * d0 or (evals > 1 and f >= f_prev):
            found = zoom(a_prev, f_prev, d_prev, a, f, d)
            break
        if abs(d) <= -c2 * d0:
            found = (a, f, payload, True)
            break
        if d >= 0:
            found = zoom(a, f, d, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev = a, f, d
        a *= 2.0
    if found is None:
        return None, None, None, False, best
    return (*found, best)


def lbfgs_minimize(fun, x0, lower=None, upper=None, config: LbfgsConfig | None = None,
                   callback=None) -> LbfgsResult:
    """Minimize ``fun(x) -> (f, grad, info)`` inside the box ``[lower, upper]``.

    Each accepted step is projected onto the box; a projection that moves the
    iterate clears the curvature memory.  Coordinates pinned at a bound with
    the gradient pointing outward are frozen for the step.  ``callback`` gets
    ``(iteration, x, f, grad, info)`` for every iterate, including the start.
    """
    cfg = config or LbfgsConfig()
    n = len(x0)
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=np.float64)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=np.float64)
    evals = 0

    def evaluate(x):
        nonlocal evals
        evals += 1
        return fun(x)

    x = np.clip(np.asarray(x0, dtype=np.float64), lower, upper)
    f, g, info = evaluate(x)
    if callback:
        callback(0, x, f, g, info)
    best_x, best_f = x.copy(), f
    state = LbfgsState(cfg.memory)
    reason = "max_iters"
    it = 0

    def free_gradient(x, g):
        pinned = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        return np.where(pinned, 0.0, g), pinned

    for it in range(1, cfg.max_iters + 1):
        gp, pinned = free_gradient(x, g)
        if np.max(np.abs(gp), initial=0.0) < cfg.gtol:
            reason, it = "gtol", it - 1
            break
        d = state.direction(gp)
        d[pinned] = 0.0
        slope = float(g @ d)
        if not slope < 0:
            state.clear()
            d = state.direction(gp)
            d[pinned] = 0.0
            slope = float(g @ d)
            if not slope < 0:
                reason, it = "no_descent", it - 1
                break

        cache = {}

        def phi(a):
            xa = x + a * d
            fa, ga, ia = evaluate(xa)
            cache[a] = (xa, fa, ga, ia)
            return fa, float(ga @ d), a

        a, fa, _, ok, best_trial = strong_wolfe(
            phi, f, slope, cfg.initial_step, cfg.c1, cfg.c2, cfg.max_line_search)
        if not ok:
            if best_trial is None or best_trial[1] >= f:
                reason, it = "line_search", it - 1
                break
            a = best_trial[0]
            reason = "line_search"
        x_trial, f_new, g_new, info_new = cache[a]
        x_new = np.clip(x_trial, lower, upper)
        if np.max(np.abs(x_new - x_trial), initial=0.0) > PROJECTION_EPS:
            f_new, g_new, info_new = evaluate(x_new)
            state.clear()
        else:
            x_new = x_trial
            state.push(x_new - x, g_new - g)
        f_old = f
        x, f, g = x_new, f_new, g_new
        if callback:
            callback(it, x, f, g, info_new)
        if f < best_f:
            best_x, best_f = x.copy(), f
        if reason == "line_search":
            break
        if abs(f_old - f) < cfg.ftol:
            reason = "ftol"
            break
    return LbfgsResult(best_x, best_f, it, evals, reason)


def optimize(img, grid, p0: ParameterSet, extractors=(), config: LbfgsConfig | None = None,
             objective: Objective | None = None, **objective_kw):
    """Refine ``p0`` by minimizing the total energy.

    Returns the best parameter set seen and one :class:`EnergyReport` per
    iterate (index 0 is the initialization).
    """
    obj = objective or Objective(img, grid, p0, extractors, **objective_kw)
    history: list[EnergyReport] = []

    def fun(v):
        report, grad, _ = obj.evaluate(v)
        return report.total, grad, report

    def record(it, x, f, g, report):
        report.iteration = it
        history.append(report)
        log.debug("iter %d E=%.6g (U=%.4g C=%.4g D=%.4g S=%.4g) |g|=%.3g", it, report.total,
                  report.e_u, report.e_c, report.e_d, report.e_s, report.grad_norm)

    idx = obj.index
    result = lbfgs_minimize(fun, obj.x0(), idx.lower, idx.upper, config, record)
    best = obj.params(result.x)
    # fixed families are carried over untouched
    for fam in ("theta1", "theta2", "theta3", "theta6"):
        setattr(best, fam, getattr(p0, fam).copy())
    return best, history
