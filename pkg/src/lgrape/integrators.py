"""Product integrators over sampled generators.

Four rules are available for generators that depend on time only:

==== =======================================================================
LP   left-point exponential, ``exp(-i L(t_L) dt)``
MP   midpoint exponential, ``exp(-i L(t_M) dt)``
LG2  edges with commutator correction ``(L_L + L_R)/2 + (i/6)[L_L, L_R] dt``
LG4  Simpson weights with correction ``(i/12)[L_L, L_R] dt``
==== =======================================================================

State-dependent generators ``L(t, rho)`` use LP, a midpoint-estimate second
order scheme and its three-point extension.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .linalg import (expm, expm_action, expm_action_threepoint, expm_action_twopoint,
                     threepoint_generator, twopoint_generator)

ROUNDOFF_FLOOR = 1e-11


class Rule(str, enum.Enum):
    LP = "LP"
    MP = "MP"
    LG2 = "LG2"
    LG4 = "LG4"


def as_rule(rule) -> Rule:
    try:
        return Rule(str(rule.value if isinstance(rule, Rule) else rule).upper().replace("-", ""))
    except ValueError:
        raise ValueError(f"unknown propagation rule {rule!r}") from None


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points ``t_0 < ... < t_N``."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("time grid needs at least one point")
        if np.any(np.diff(p) <= 0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "points", p)

    @classmethod
    def uniform(cls, total, n_slices, t0=0.0):
        return cls(t0 + total * np.arange(n_slices + 1) / n_slices)

    @classmethod
    def from_durations(cls, tau, t0=0.0):
        return cls(t0 + np.concatenate([[0.0], np.cumsum(tau)]))

    @property
    def durations(self):
        return np.diff(self.points)

    @property
    def n_slices(self):
        return self.points.size - 1


def _advance(rule, L, M, R, dt, state):
    if rule is Rule.LP:
        return expm_action(L, state, dt)
    if rule is Rule.MP:
        return expm_action(M, state, dt)
    if rule is Rule.LG2:
        return expm_action_twopoint(L, R, state, dt)
    return expm_action_threepoint(L, M, R, state, dt)


def _needs(rule):
    """Which samples (left, mid, right) a rule consumes."""
    return {
        Rule.LP: (True, False, False),
        Rule.MP: (False, True, False),
        Rule.LG2: (True, False, True),
        Rule.LG4: (True, True, True),
    }[rule]


def step(rule, sampler: Callable[[float], np.ndarray], t_left, t_right, state, cache=None):
    """Advance ``state`` from ``t_left`` to ``t_right`` with one rule.

    ``cache`` may be a dict keyed by time; samples found there are reused and
    new samples are stored, which is how consecutive slices share edges.
    """
    rule = as_rule(rule)
    if not t_right > t_left:
        raise ValueError("step needs t_right > t_left")
    dt = t_right - t_left

    def sample(t):
        if cache is None:
            return sampler(t)
        if t not in cache:
            cache[t] = sampler(t)
        return cache[t]

    need_l, need_m, need_r = _needs(rule)
    L = sample(t_left) if need_l else None
    M = sampler(0.5 * (t_left + t_right)) if need_m else None
    R = sample(t_right) if need_r else None
    return _advance(rule, L, M, R, dt, state)


def propagate(rule, sampler, grid: TimeGrid, initial, trajectory=True):
    """Step through every slice of ``grid``.

    Returns the list of states at all grid points (``trajectory=True``) or
    only the final state.  Edge samples are reused between adjacent slices.
    """
    rule = as_rule(rule)
    need_l, need_m, need_r = _needs(rule)
    t = grid.points
    state = np.ascontiguousarray(initial, dtype=complex)
    states = [state] if trajectory else None
    right = sampler(t[0]) if (need_l or need_r) else None
    for n in range(grid.n_slices):
        left = right
        if need_r or (need_l and n + 1 < grid.n_slices):
            right = sampler(t[n + 1])
        mid = sampler(0.5 * (t[n] + t[n + 1])) if need_m else None
        state = _advance(rule, left, mid, right, t[n + 1] - t[n], state)
        if trajectory:
            states.append(state)
    return states if trajectory else state


def _assembled(rule, L, M, R, dt):
    if rule is Rule.LP:
        return L
    if rule is Rule.MP:
        return M
    if rule is Rule.LG2:
        return twopoint_generator(L, R, dt)
    return threepoint_generator(L, M, R, dt)


def _check_hermitian(h, tol=1e-10):
    scale = max(np.linalg.norm(h), 1e-300)
    if np.linalg.norm(h - h.conj().T) > tol * scale:
        raise ValueError("isospectral propagation needs Hermitian Hamiltonians")


def propagate_isospectral(rule, sampler, grid: TimeGrid, rho):
    """Two-sided propagation ``rho <- P rho P^dagger`` of a density matrix.

    ``sampler`` returns Hilbert-space Hamiltonians.  The slice propagator is
    the exponential of the same assembled generator used by :func:`propagate`.
    """
    rule = as_rule(rule)
    need_l, need_m, need_r = _needs(rule)
    t = grid.points
    rho = np.asarray(rho, dtype=complex)

    def sample(tt):
        h = np.asarray(sampler(tt), dtype=complex)
        _check_hermitian(h)
        return h

    right = sample(t[0]) if (need_l or need_r) else None
    for n in range(grid.n_slices):
        left = right
        if need_l or need_r:
            right = sample(t[n + 1])
        mid = sample(0.5 * (t[n] + t[n + 1])) if need_m else None
        dt = t[n + 1] - t[n]
        P = expm(-1j * dt * _assembled(rule, left, mid, right, dt))
        rho = P @ rho @ P.conj().T
    return rho


# -- state-dependent generators ---------------------------------------------------

def step_state_dependent_lp(sampler, t_left, t_right, state):
    """Left-point step with the generator frozen at ``(t_L, rho_L)``."""
    return expm_action(sampler(t_left, state), state, t_right - t_left)


def step_state_dependent_lg2(sampler, t_left, t_right, state):
    """Second-order step: estimate the midpoint generator, then propagate."""
    if not t_right > t_left:
        raise ValueError("step needs t_right > t_left")
    dt = t_right - t_left
    t_mid = 0.5 * (t_left + t_right)
    L_left = sampler(t_left, state)
    rho_mid = expm_action(L_left, state, 0.5 * dt)
    L_mid = sampler(t_mid, rho_mid)
    return expm_action(L_mid, state, dt)


def step_state_dependent_lg4(sampler, t_left, t_right, state):
    """Three-point step built on the second-order right-edge estimate."""
    if not t_right > t_left:
        raise ValueError("step needs t_right > t_left")
    dt = t_right - t_left
    t_mid = 0.5 * (t_left + t_right)
    L_left = sampler(t_left, state)
    rho_mid = expm_action(L_left, state, 0.5 * dt)
    L_mid = sampler(t_mid, rho_mid)
    rho_right = expm_action(L_mid, state, dt)
    L_right = sampler(t_right, rho_right)
    return expm_action_threepoint(L_left, L_mid, L_right, state, dt)


_STATE_STEPS = {
    Rule.LP: step_state_dependent_lp,
    Rule.LG2: step_state_dependent_lg2,
    Rule.LG4: step_state_dependent_lg4,
}


def propagate_state_dependent(rule, sampler, grid: TimeGrid, initial, trajectory=True):
    """Propagate under ``L(t, rho)`` with LP, LG2 or LG4."""
    rule = as_rule(rule)
    if rule not in _STATE_STEPS:
        raise ValueError(f"rule {rule.value} is not available for state-dependent generators")
    stepper = _STATE_STEPS[rule]
    t = grid.points
    state = np.ascontiguousarray(initial, dtype=complex)
    states = [state] if trajectory else None
    for n in range(grid.n_slices):
        state = stepper(sampler, t[n], t[n + 1], state)
        if trajectory:
            states.append(state)
    return states if trajectory else state


# -- convergence order ---------------------------------------------------------

def relative_error(x, ref):
    return float(np.linalg.norm(np.asarray(x) - ref) / np.linalg.norm(ref))


def final_state(rule, sampler, total_time, n_slices, initial, state_dependent=False, t0=0.0):
    grid = TimeGrid.uniform(total_time, n_slices, t0)
    if state_dependent:
        return propagate_state_dependent(rule, sampler, grid, initial, trajectory=False)
    return propagate(rule, sampler, grid, initial, trajectory=False)


def reference_state(sampler, total_time, counts, initial, state_dependent=False,
                    factor=32, t0=0.0):
    """LG4 solution on a grid ``factor`` times finer than the largest count."""
    return final_state(Rule.LG4, sampler, total_time, factor * max(counts), initial,
                       state_dependent, t0)


def fit_slope(counts: Sequence[int], errors: Sequence[float], floor=ROUNDOFF_FLOOR):
    """Least-squares slope of ``log(error)`` against ``log(count)``.

    Points at or below ``floor`` are dropped as roundoff dominated.
    """
    c = np.asarray(counts, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = e > floor
    if keep.sum() < 2:
        raise ValueError("cannot estimate order: errors are at the roundoff floor")
    slope, _ = np.polyfit(np.log(c[keep]), np.log(e[keep]), 1)
    return float(slope)


def error_table(rules, sampler, total_time, counts, initial, state_dependent=False,
                reference=None, t0=0.0):
    """Relative final-state errors ``{rule: [err per count]}`` against a reference."""
    if reference is None:
        reference = reference_state(sampler, total_time, counts, initial, state_dependent, t0=t0)
    out = {}
    for rule in rules:
        rule = as_rule(rule)
        out[rule] = [relative_error(final_state(rule, sampler, total_time, n, initial,
                                                state_dependent, t0), reference)
                     for n in counts]
    return out


def estimate_order(rule, sampler, total_time, counts, initial, state_dependent=False,
                   reference=None, t0=0.0):
    """Empirical log-log slope of the final-state error against slice count.

    A convergent rule of order ``p`` gives a slope near ``-p``.
    """
    counts = sorted(int(n) for n in counts)
    if len(counts) < 4 or counts[-1] < 10 * counts[0]:
        raise ValueError("need at least four slice counts spanning a decade")
    errs = error_table([rule], sampler, total_time, counts, initial, state_dependent,
                       reference, t0)[as_rule(rule)]
    return fit_slope(counts, errs)
