"""Limited-memory BFGS minimiser with strong-Wolfe line search, freeze masks
and box bounds enforced by projection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    memory: int = 10
    max_iterations: int = 200
    gtol: float = 1e-8
    ftol: float = 1e-15
    c1: float = 1e-4
    c2: float = 0.9
    bound: Optional[float] = None
    seed: int = 0
    max_ls_evals: int = 30
    check_gradient: bool = False

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("line search needs 0 < c1 < c2 < 1")
        if self.memory < 0:
            raise ValueError("memory must be non-negative")


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    history: list = field(default_factory=list)
    n_iter: int = 0
    n_eval: int = 0
    status: str = ""

    @property
    def success(self):
        return self.status in ("gtol", "ftol")


class _Counted:
    def __init__(self, fun):
        self.fun = fun
        self.n = 0

    def __call__(self, x):
        self.n += 1
        v, g = self.fun(x)
        return float(v), np.asarray(g, dtype=float)


def _project(x, bound):
    return x if bound is None else np.clip(x, -bound, bound)


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolant on [a, b], or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2 * d2)
    lo, hi = min(a, b), max(a, b)
    if not np.isfinite(t) or t <= lo or t >= hi:
        return None
    return t


def _interpolate(a, fa, ga, b, fb, gb):
    t = _cubic_min(a, fa, ga, b, fb, gb)
    lo, hi = min(a, b), max(a, b)
    width = hi - lo
    if t is None or t < lo + 0.1 * width or t > hi - 0.1 * width:
        t = 0.5 * (a + b)
    return t


def line_search(phi, f0, g0, alpha0, cfg: OptimizerConfig):
    """Strong-Wolfe bracketing/zoom search on a 1-D restriction.

    ``phi(alpha)`` returns ``(value, slope, payload, clipped)``.  A clipped
    trial point lies on a projected (kinked) path, where only sufficient
    decrease is required.  Returns the payload of the accepted point, or
    the best decreasing point found when the Wolfe conditions cannot be
    met, or None.
    """
    best = None
    a_prev, f_prev, g_prev = 0.0, f0, g0
    alpha = alpha0
    evals = 0

    def keep(f, payload):
        nonlocal best
        if f < f0 and (best is None or f < best[0]):
            best = (f, payload)

    def zoom(lo, flo, glo, hi, fhi, ghi):
        nonlocal evals
        while evals < cfg.max_ls_evals:
            a = _interpolate(lo, flo, glo, hi, fhi, ghi)
            f, g, pay, clipped = phi(a)
            evals += 1
            keep(f, pay)
            if f > f0 + cfg.c1 * a * g0 or f >= flo:
                hi, fhi, ghi = a, f, g
            else:
                if abs(g) <= -cfg.c2 * g0 or clipped:
                    return pay
                if g * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo = a, f, g
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    for i in range(cfg.max_ls_evals):
        f, g, pay, clipped = phi(alpha)
        evals += 1
        keep(f, pay)
        if not np.isfinite(f):
            alpha = 0.5 * (a_prev + alpha)
            continue
        if f > f0 + cfg.c1 * alpha * g0 or (i > 0 and f >= f_prev):
            res = zoom(a_prev, f_prev, g_prev, alpha, f, g)
            return res if res is not None else (best[1] if best else None)
        if abs(g) <= -cfg.c2 * g0 or clipped:
            return pay
        if g >= 0:
            res = zoom(alpha, f, g, a_prev, f_prev, g_prev)
            return res if res is not None else (best[1] if best else None)
        a_prev, f_prev, g_prev = alpha, f, g
        alpha *= 2.0
    return best[1] if best else None


def _free_mask(x, g, frozen, bound):
    free = ~frozen
    if bound is not None:
        at_hi = (x >= bound) & (g < 0)
        at_lo = (x <= -bound) & (g > 0)
        free &= ~(at_hi | at_lo)
    return free


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho))
        q -= a * y
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y), (a, rho) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize(objective: Callable[[np.ndarray], tuple], x0, cfg: OptimizerConfig = None,
             frozen=None, callback=None):
    """Minimise ``objective(x) -> (value, gradient)``.

    Frozen coordinates keep their initial value bit for bit.  When
    ``cfg.bound`` is set every iterate is clipped to ``[-bound, bound]``.
    The accepted values in ``history`` never increase.  ``memory=0`` gives
    steepest descent.
    """
    cfg = cfg or OptimizerConfig()
    fun = _Counted(objective)
    x = np.array(x0, dtype=float).ravel()
    frozen = np.zeros(x.shape, bool) if frozen is None else np.asarray(frozen, bool).ravel().copy()
    x = np.where(frozen, x, _project(x, cfg.bound))
    f, g = fun(x)
    if cfg.check_gradient:
        _check_gradient(fun, x, g, frozen)
    history = [f]
    S, Y = [], []
    prev = None
    status = "max_iterations"
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        free = _free_mask(x, g, frozen, cfg.bound)
        gf = np.where(free, g, 0.0)
        gnorm = np.linalg.norm(gf)
        if gnorm <= cfg.gtol:
            status = "gtol"
            it -= 1
            break
        d = -_two_loop(gf, S, Y) if cfg.memory > 0 else -gf
        d = np.where(free, d, 0.0)
        slope = d @ gf
        if slope >= 0 or not np.isfinite(slope):
            S.clear()
            Y.clear()
            d = -gf
            slope = -gnorm ** 2
        if S:
            alpha0 = 1.0
        elif prev is None:
            alpha0 = max(1.0, np.max(np.abs(x))) / gnorm
        else:
            # first-order change predicted by the previous accepted step
            alpha0 = prev[0] * prev[1] / slope

        def phi(a, x=x, d=d, free=free):
            raw = x + a * d
            xa = np.where(free, _project(raw, cfg.bound), x)
            fa, ga = fun(xa)
            clipped = cfg.bound is not None and bool(np.any(xa[free] != raw[free]))
            return fa, float(ga @ d), (xa, fa, ga), clipped

        acc = line_search(phi, f, slope, alpha0, cfg)
        if acc is None:
            status = "line_search_failed"
            it -= 1
            break
        x_new, f_new, g_new = acc
        step = np.max(np.abs(x_new - x)) / max(np.max(np.abs(d)), 1e-300)
        prev = (step, slope)
        s = np.where(free, x_new - x, 0.0)
        y = np.where(free, g_new - g, 0.0)
        if s @ y > 1e-12 * np.sqrt((s @ s) * (y @ y)) and cfg.memory > 0:
            S.append(s)
            Y.append(y)
            if len(S) > cfg.memory:
                S.pop(0)
                Y.pop(0)
        df = f - f_new
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if callback is not None:
            callback(it, x, f)
        if df <= cfg.ftol * abs(f):
            status = "ftol"
            break
    log.debug("minimize: %s after %d iterations, f=%.3e", status, it, f)
    return OptimizeResult(x, f, g, history, it, fun.n, status)


def _check_gradient(fun, x, g, frozen, h=1e-6):
    idx = np.flatnonzero(~frozen)[:8]
    for i in idx:
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        fd = (fun(x + e)[0] - fun(x - e)[0]) / (2 * e[i])
        if abs(fd - g[i]) > 1e-4 * max(1.0, abs(fd)):
            raise ValueError(f"gradient check failed at coordinate {i}: {g[i]} vs {fd}")


def random_guess(shape, c_max, seed, frozen=None):
    """Uniform draws in ``[-c_max/10, c_max/10]``; frozen entries are zero."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-c_max / 10, c_max / 10, size=shape)
    if frozen is not None:
        x[np.broadcast_to(np.asarray(frozen, bool), shape)] = 0.0
    return x
