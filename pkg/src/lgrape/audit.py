"""Finite-difference audit of every analytic gradient family on random problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grape
from .integrators import TimeGrid

FAMILIES = ("pwc_controls", "pwl_controls", "pwc_durations", "pwl_durations", "phases")


def _hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / (2 * np.sqrt(d))


def _unit(rng, shape):
    v = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_problem(rng, interpolation, max_dim=16):
    """Random state-transfer problem of dimension ``2..max_dim``.

    Half of the drifts carry a dissipative part, so the generators need not
    be Hermitian.
    """
    interp = grape.as_interp(interpolation)
    d = int(rng.integers(2, max_dim + 1))
    drift = _hermitian(rng, d)
    if rng.random() < 0.5:
        b = rng.normal(size=(d, d)) / d
        drift = drift - 0.5j * (b @ b.T)
    controls = [_hermitian(rng, d) for _ in range(2)]
    n = int(rng.integers(3, 7))
    s = int(rng.integers(1, 4))
    tau = rng.uniform(0.2, 0.6, n)
    npts = n + 1 if interp is grape.Interp.PWL else n
    seq = grape.ControlSequence(rng.normal(size=(2, npts)), TimeGrid.from_durations(tau), interp)
    return grape.ControlProblem(drift, controls, _unit(rng, (s, d)), _unit(rng, (s, d)), seq)


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def relative_error(analytic, fd):
    scale = max(np.max(np.abs(fd)), 1e-300)
    return float(np.max(np.abs(np.asarray(analytic) - fd)) / scale)


def _f(problem, seq):
    return grape.fidelity(problem.with_sequence(seq)).f


def check_controls(problem):
    seq = problem.sequence
    an = grape.fidelity(problem).grad_c
    fd = central_difference(lambda c: _f(problem, seq.with_coeffs(c)), seq.coeffs)
    return relative_error(an, fd)


def check_durations(problem):
    seq = problem.sequence
    an = grape.fidelity(problem, want_tau=True).grad_tau
    fd = central_difference(lambda t: _f(problem, seq.with_durations(t)), seq.durations)
    return relative_error(an, fd)


def check_phases(problem, rng, amplitude=1.0):
    seq = problem.sequence
    phi = rng.uniform(-np.pi, np.pi, seq.n_points)

    def f(p):
        return _f(problem, seq.with_coeffs(grape.phase_to_xy(amplitude, p)))

    r = grape.fidelity(problem.with_sequence(seq.with_coeffs(grape.phase_to_xy(amplitude, phi))))
    an = grape.phase_chain_rule(amplitude, phi, r.grad_c[0], r.grad_c[1])
    return relative_error(an, central_difference(f, phi))


@dataclass
class AuditReport:
    n_problems: int
    max_error: dict = field(default_factory=dict)

    def passed(self, tol=1e-6):
        return all(v < tol for v in self.max_error.values())

    def lines(self):
        return [f"{k}: max relative error {v:.3e}" for k, v in self.max_error.items()]


def gradient_audit(seed=0, n_problems=100, max_dim=16):
    """Largest analytic-vs-FD relative error per gradient family."""
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(FAMILIES, 0.0)
    for i in range(n_problems):
        interp = "pwc" if i % 2 == 0 else "pwl"
        p = random_problem(rng, interp, max_dim)
        worst[f"{interp}_controls"] = max(worst[f"{interp}_controls"], check_controls(p))
        worst[f"{interp}_durations"] = max(worst[f"{interp}_durations"], check_durations(p))
        worst["phases"] = max(worst["phases"], check_phases(p, rng))
    return AuditReport(n_problems, worst)
