"""Fidelities and analytic gradients for piecewise-constant (PWC) and
piecewise-linear (PWL) control sequences.

The fidelity of a problem is ``f = mean_s Re <target_s | P_N ... P_1 | rho0_s>``.
Gradients use one forward sweep, one backward sweep of costates and one
auxiliary-matrix exponential per slice.  The auxiliary block is contracted
with ``rho lambda^dagger`` so that a single exponential serves every control
channel, both edges of a PWL slice and the slice duration::

    <lambda| d exp(A)[E] |rho> = Tr(E Y),   Y = dexp(A)[rho lambda^dagger]

``method="direct"`` evaluates every derivative with its own auxiliary matrix
instead; it is slower and kept as an independent check.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .integrators import TimeGrid
from .linalg import commutator, expm, expm_dirdiff


class Interp(str, enum.Enum):
    PWC = "pwc"
    PWL = "pwl"


def as_interp(x) -> Interp:
    try:
        return Interp(str(x.value if isinstance(x, Interp) else x).lower())
    except ValueError:
        raise ValueError(f"unknown parameterisation {x!r}") from None


@dataclass
class ControlSequence:
    """Control coefficients (rad/s) on a time grid.

    PWC sequences carry one value per slice, PWL sequences one per grid node.
    ``freeze`` marks coefficients the optimiser must not move; a 1-D mask
    applies to every channel.
    """

    coeffs: np.ndarray
    grid: TimeGrid
    interpolation: Interp = Interp.PWC
    freeze: Optional[np.ndarray] = None

    def __post_init__(self):
        self.interpolation = as_interp(self.interpolation)
        if not isinstance(self.grid, TimeGrid):
            self.grid = TimeGrid(self.grid)
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.shape[1] != self.n_points:
            raise ValueError(f"{self.interpolation.value} sequence on {self.grid.n_slices} slices "
                             f"needs {self.n_points} points per channel, got {c.shape[1]}")
        self.coeffs = c
        if self.freeze is None:
            self.freeze = np.zeros(c.shape, dtype=bool)
        else:
            f = np.asarray(self.freeze, dtype=bool)
            self.freeze = np.broadcast_to(f, c.shape).copy()

    @property
    def n_points(self):
        n = self.grid.n_slices
        return n if self.interpolation is Interp.PWC else n + 1

    @property
    def n_channels(self):
        return self.coeffs.shape[0]

    @property
    def durations(self):
        return self.grid.durations

    def with_coeffs(self, coeffs):
        return replace(self, coeffs=np.asarray(coeffs, dtype=float).reshape(self.coeffs.shape))

    def with_durations(self, tau):
        return replace(self, grid=TimeGrid.from_durations(tau, self.grid.points[0]))

    def values_at(self, t):
        """Control values at arbitrary times, shape ``(K, len(t))``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        pts = self.grid.points
        if self.interpolation is Interp.PWL:
            return np.stack([np.interp(t, pts, c) for c in self.coeffs])
        idx = np.clip(np.searchsorted(pts, t, side="right") - 1, 0, self.n_points - 1)
        out = self.coeffs[:, idx]
        outside = (t < pts[0]) | (t > pts[-1])
        out[:, outside] = 0.0
        return out


@dataclass
class ControlProblem:
    """State-transfer problem ``rho0 -> target`` under ``D + sum_k c_k C_k``.

    ``drift`` is a single generator or one per slice (PWC) / per node (PWL).
    ``rho0`` and ``target`` are single vectors or stacks of ``S`` vectors;
    the fidelity averages over the stacked pairs, which all share the same
    propagators.
    """

    drift: np.ndarray
    controls: Sequence[np.ndarray]
    rho0: np.ndarray
    target: np.ndarray
    sequence: ControlSequence

    def __post_init__(self):
        self.drift = np.asarray(self.drift, dtype=complex)
        self.controls = np.asarray(self.controls, dtype=complex)
        if self.controls.ndim == 2:
            self.controls = self.controls[None]
        self.rho0 = np.atleast_2d(np.asarray(self.rho0, dtype=complex))
        self.target = np.atleast_2d(np.asarray(self.target, dtype=complex))
        d = self.dim
        if self.drift.shape[-2:] != (d, d) or self.controls.shape[1:] != (d, d):
            raise ValueError("drift, controls and states disagree in dimension")
        if self.rho0.shape != self.target.shape or self.rho0.shape[1] != d:
            raise ValueError("rho0 and target must have matching shapes (S, dim)")
        if self.controls.shape[0] != self.sequence.n_channels:
            raise ValueError("number of control operators differs from sequence channels")
        if self.drift.ndim == 3 and self.drift.shape[0] not in (1, self.sequence.n_points):
            raise ValueError("time-dependent drift needs one generator per control point")
        for name, s in (("rho0", self.rho0), ("target", self.target)):
            if not np.allclose(np.linalg.norm(s, axis=1), 1.0, atol=1e-8):
                raise ValueError(f"{name} must be normalised to unit 2-norm")

    @property
    def dim(self):
        return self.rho0.shape[-1]

    def with_sequence(self, sequence):
        return replace(self, sequence=sequence)


@dataclass
class FidelityReport:
    f: float
    grad_c: np.ndarray
    grad_tau: Optional[np.ndarray] = None
    freeze: Optional[np.ndarray] = field(default=None, repr=False)

    def masked_grad(self):
        """Control gradient with frozen entries zeroed."""
        g = self.grad_c.copy()
        if self.freeze is not None:
            g[self.freeze] = 0.0
        return g


# -- batched core ---------------------------------------------------------------

def _node_generators(drift, controls, coeffs):
    """``L_j = D_j + sum_k c_kj C_k`` for every member and point, (B, P, d, d)."""
    return drift + np.einsum("kp,bkij->bpij", coeffs, controls)


def _slice_exponents(interp, gens, tau):
    """Exponents ``A_n`` and, for PWL, the edge generators of each slice."""
    t = tau[None, :, None, None]
    if interp is Interp.PWC:
        return -1j * gens * t, None, None
    left, right = gens[:, :-1], gens[:, 1:]
    gen = 0.5 * (left + right) + (1j / 12.0) * t * commutator(left, right)
    return -1j * gen * t, left, right


def _sweeps(P, rho0, target):
    """Forward states ``rho_n`` and costates ``lambda_n`` at every node."""
    B, N = P.shape[:2]
    fwd = np.empty((B, N + 1) + rho0.shape[1:], dtype=complex)
    bwd = np.empty_like(fwd)
    fwd[:, 0] = rho0
    for n in range(N):
        fwd[:, n + 1] = np.einsum("bij,bsj->bsi", P[:, n], fwd[:, n])
    bwd[:, N] = target
    for n in range(N, 0, -1):
        bwd[:, n - 1] = np.einsum("bji,bsj->bsi", P[:, n - 1].conj(), bwd[:, n])
    return fwd, bwd


def _trace_with(ops, Y):
    """``Tr(C_k Y_bn)`` for every channel, shape (B, K, N)."""
    return np.einsum("bkij,bnji->bkn", ops, Y)


def _evaluate(drift, controls, rho0, target, coeffs, tau, interp, want_tau):
    """Batched fidelities and gradients.

    drift (B, Pd, d, d) with Pd 1 or P; controls (B, K, d, d);
    rho0/target (B, S, d); coeffs (K, P); tau (N,).
    Returns f (B,), grad_c (B, K, P), grad_tau (B, N) or None.
    """
    B, K = controls.shape[:2]
    d = rho0.shape[-1]
    S = rho0.shape[1]
    N = tau.shape[0]
    P_pts = coeffs.shape[1]
    if N == 0:
        f = np.einsum("bsi,bsi->b", target.conj(), rho0).real / S
        return f, np.zeros((B, K, P_pts)), (np.zeros((B, 0)) if want_tau else None)

    gens = _node_generators(drift, controls, coeffs)
    A, left, right = _slice_exponents(interp, gens, tau)
    prop = expm(A)
    fwd, bwd = _sweeps(prop, rho0, target)
    f = np.einsum("bsi,bsi->b", bwd[:, N].conj(), fwd[:, N]).real / S

    # M_n = mean_s rho_{n-1} lambda_n^dagger; Y_n = dexp(A_n)[M_n]
    M = np.einsum("bnsi,bnsj->bnij", fwd[:, :-1], bwd[:, 1:].conj()) / S
    _, Y = expm_dirdiff(A, M)
    t = tau[None, :, None, None]

    grad_tau = None
    if interp is Interp.PWC:
        grad_c = (-1j * tau[None, None, :] * _trace_with(controls, Y)).real
        if want_tau:
            lam_L_rho = np.einsum("bnsi,bnij,bnsj->bn", bwd[:, 1:].conj(), gens, fwd[:, 1:])
            grad_tau = (-1j * lam_L_rho / S).real
    else:
        YL = Y @ left - left @ Y
        RY = right @ Y - Y @ right
        z_right = 0.5 * Y + (1j / 12.0) * t * YL
        z_left = 0.5 * Y + (1j / 12.0) * t * RY
        scale = -1j * tau[None, None, :]
        g_right = (scale * _trace_with(controls, z_right)).real
        g_left = (scale * _trace_with(controls, z_left)).real
        grad_c = np.zeros((B, K, N + 1))
        grad_c[:, :, 1:] += g_right
        grad_c[:, :, :-1] += g_left
        if want_tau:
            dA = -0.5j * (left + right) + (t / 6.0) * commutator(left, right)
            grad_tau = np.einsum("bnij,bnji->bn", dA, Y).real
    return f, grad_c, grad_tau


# -- direct (per-derivative) evaluation, used as a cross-check -------------------

def _direct(problem: ControlProblem, want_tau):
    seq = problem.sequence
    interp = seq.interpolation
    tau = seq.durations
    N = tau.size
    C = problem.controls
    K = C.shape[0]
    drift = problem.drift if problem.drift.ndim == 3 else problem.drift[None]
    gens = [drift[min(j, drift.shape[0] - 1)] + np.tensordot(seq.coeffs[:, j], C, 1)
            for j in range(seq.n_points)]
    S = problem.rho0.shape[0]

    def A_of(n, t):
        if interp is Interp.PWC:
            return -1j * gens[n] * t
        L, R = gens[n], gens[n + 1]
        return -1j * (0.5 * (L + R) + (1j * t / 12.0) * commutator(L, R)) * t

    props = [expm(A_of(n, tau[n])) for n in range(N)]
    fwd = [problem.rho0.T]
    for P in props:
        fwd.append(P @ fwd[-1])
    bwd = [problem.target.T]
    for P in reversed(props):
        bwd.insert(0, P.conj().T @ bwd[0])

    def sandwich(n, dP):
        return np.einsum("is,ij,js->", bwd[n + 1].conj(), dP, fwd[n]).real / S

    f = float(np.einsum("is,is->", bwd[N].conj(), fwd[N]).real / S)
    grad_c = np.zeros(seq.coeffs.shape)
    for n in range(N):
        A = A_of(n, tau[n])
        t = tau[n]
        for k in range(K):
            if interp is Interp.PWC:
                grad_c[k, n] = sandwich(n, expm_dirdiff(A, -1j * t * C[k])[1])
            else:
                L, R = gens[n], gens[n + 1]
                dl = C[k] / 2 + (1j * t / 12.0) * commutator(C[k], R)
                dr = C[k] / 2 + (1j * t / 12.0) * commutator(L, C[k])
                grad_c[k, n] += sandwich(n, expm_dirdiff(A, -1j * t * dl)[1])
                grad_c[k, n + 1] += sandwich(n, expm_dirdiff(A, -1j * t * dr)[1])
    grad_tau = None
    if want_tau:
        grad_tau = np.zeros(N)
        for n in range(N):
            if interp is Interp.PWC:
                grad_tau[n] = sandwich(n, -1j * gens[n] @ props[n])
            else:
                L, R = gens[n], gens[n + 1]
                dA = -0.5j * (L + R) + (tau[n] / 6.0) * commutator(L, R)
                grad_tau[n] = sandwich(n, expm_dirdiff(A_of(n, tau[n]), dA)[1])
    return FidelityReport(f, grad_c, grad_tau, seq.freeze)


# -- ensembles ---------------------------------------------------------------------

class Ensemble:
    """Weighted members sharing one control sequence, evaluated as one batch.

    Members are independent problems; stacking only vectorises the
    arithmetic.  Weights must be non-negative and sum to one.
    """

    def __init__(self, members):
        members = list(members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        w = np.array([float(m[0]) for m in members])
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("ensemble weights must be non-negative and sum to one")
        probs = [m[1] for m in members]
        ref = probs[0].sequence
        for p in probs[1:]:
            s = p.sequence
            if (s.interpolation is not ref.interpolation or s.coeffs.shape != ref.coeffs.shape
                    or s.grid.n_slices != ref.grid.n_slices):
                raise ValueError("ensemble members must share the control sequence shape")
        self.weights = w
        self.problems = probs
        self.sequence = ref
        shapes = {(p.dim, p.rho0.shape[0], p.controls.shape[0]) for p in probs}
        self._stackable = len(shapes) == 1
        if self._stackable:
            npts = ref.n_points
            drifts = []
            for p in probs:
                dr = p.drift if p.drift.ndim == 3 else p.drift[None]
                drifts.append(dr)
            if len({dr.shape[0] for dr in drifts}) > 1:
                drifts = [np.broadcast_to(dr, (npts,) + dr.shape[1:]) for dr in drifts]
            self._drift = np.stack(drifts)
            self._controls = np.stack([p.controls for p in probs])
            self._rho0 = np.stack([p.rho0 for p in probs])
            self._target = np.stack([p.target for p in probs])

    def evaluate(self, sequence: Optional[ControlSequence] = None, want_tau=False):
        seq = self.sequence if sequence is None else sequence
        if seq.coeffs.shape != self.sequence.coeffs.shape:
            raise ValueError("sequence shape differs from the ensemble's")
        if self._stackable:
            f, g, gt = _evaluate(self._drift, self._controls, self._rho0, self._target,
                                 seq.coeffs, seq.durations, seq.interpolation, want_tau)
            w = self.weights
            return FidelityReport(float(w @ f), np.tensordot(w, g, 1),
                                  None if gt is None else w @ gt, seq.freeze)
        f = 0.0
        g = np.zeros(seq.coeffs.shape)
        gt = np.zeros(seq.grid.n_slices) if want_tau else None
        for w, p in zip(self.weights, self.problems):
            r = Ensemble([(1.0, p)]).evaluate(seq, want_tau)
            f += w * r.f
            g += w * r.grad_c
            if want_tau:
                gt += w * r.grad_tau
        return FidelityReport(float(f), g, gt, seq.freeze)

    def final_states(self, sequence=None, chunk=256):
        """Forward propagation only, ``(B, S, d)``; slices are exponentiated in chunks."""
        seq = self.sequence if sequence is None else sequence
        if not self._stackable:
            raise ValueError("final_states needs members of one shape")
        drift = self._drift
        tau = seq.durations
        state = self._rho0.copy()
        pwl = seq.interpolation is Interp.PWL
        for a in range(0, tau.size, chunk):
            b = min(a + chunk, tau.size)
            pts = slice(a, b + 1 if pwl else b)
            dr = drift if drift.shape[1] == 1 else drift[:, pts]
            gens = _node_generators(dr, self._controls, seq.coeffs[:, pts])
            A, _, _ = _slice_exponents(seq.interpolation, gens, tau[a:b])
            prop = expm(A)
            for n in range(b - a):
                state = np.einsum("bij,bsj->bsi", prop[:, n], state)
        return state

    def member_fidelities(self, sequence=None, chunk=256):
        """Per-member fidelities without gradients."""
        fin = self.final_states(sequence, chunk)
        return np.einsum("bsi,bsi->b", self._target.conj(), fin).real / fin.shape[1]

    def trajectories(self, sequence=None):
        """Forward states and costates at every node, each ``(B, N+1, S, d)``."""
        seq = self.sequence if sequence is None else sequence
        if not self._stackable:
            raise ValueError("trajectories need members of one shape")
        gens = _node_generators(self._drift, self._controls, seq.coeffs)
        A, _, _ = _slice_exponents(seq.interpolation, gens, seq.durations)
        return _sweeps(expm(A), self._rho0, self._target)


def _check_interp(problem, expected):
    if problem.sequence.interpolation is not expected:
        raise ValueError(f"problem is parameterised as {problem.sequence.interpolation.value}, "
                         f"expected {expected.value}")


def fidelity(problem: ControlProblem, want_tau=False, method="batched"):
    """Fidelity and gradients for either parameterisation."""
    if method == "direct":
        return _direct(problem, want_tau)
    if method != "batched":
        raise ValueError(f"unknown method {method!r}")
    return Ensemble([(1.0, problem)]).evaluate(want_tau=want_tau)


def fidelity_pwc(problem: ControlProblem, want_tau=False, method="batched"):
    _check_interp(problem, Interp.PWC)
    return fidelity(problem, want_tau, method)


def fidelity_pwl(problem: ControlProblem, want_tau=False, method="batched"):
    _check_interp(problem, Interp.PWL)
    return fidelity(problem, want_tau, method)


def slice_duration_gradient_pwc(problem: ControlProblem):
    """``df/dtau_n = Re(-i <lambda_n| L_n |rho_n>)`` from stored trajectories."""
    _check_interp(problem, Interp.PWC)
    return fidelity(problem, want_tau=True).grad_tau


def slice_duration_gradient_pwl(problem: ControlProblem):
    """Slice-duration gradient of the PWL propagators."""
    _check_interp(problem, Interp.PWL)
    return fidelity(problem, want_tau=True).grad_tau


def ensemble_fidelity(members, want_tau=False):
    """Weighted average of member fidelities and gradients."""
    return Ensemble(members).evaluate(want_tau=want_tau)


# -- parameter transforms ------------------------------------------------------------

def phase_chain_rule(amplitude, phases, grad_cx, grad_cy):
    """Gradient with respect to phases of ``(A cos phi, A sin phi)`` controls."""
    phases = np.asarray(phases, dtype=float)
    return amplitude * (-np.sin(phases) * grad_cx + np.cos(phases) * grad_cy)


def phase_to_xy(amplitude, phases):
    phases = np.asarray(phases, dtype=float)
    return np.stack([amplitude * np.cos(phases), amplitude * np.sin(phases)])


@dataclass(frozen=True)
class WaveformBasis:
    """Real column-orthonormal waveform basis ``W`` (points x waveforms)."""

    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        if np.linalg.norm(W.T @ W - np.eye(W.shape[1])) >= 1e-10:
            raise ValueError("waveform basis columns are not orthonormal")
        object.__setattr__(self, "W", W)

    def expand(self, alpha):
        """Coefficients ``c = W alpha`` per channel; alpha is (K, M)."""
        return np.atleast_2d(alpha) @ self.W.T


def _basis(W):
    return W if isinstance(W, WaveformBasis) else WaveformBasis(W)


def basis_project(grad_c, W):
    """``W^T g`` for every channel; ``grad_c`` is (K, P) or (P,)."""
    W = _basis(W).W
    return np.asarray(grad_c) @ W


def basis_congruence(hessian_c, W):
    """``W^T H W`` for every channel pair.

    ``hessian_c`` is (P, P) for one channel or (K, P, K, P) for several.
    """
    W = _basis(W).W
    H = np.asarray(hessian_c)
    if H.ndim == 2:
        return W.T @ H @ W
    if H.ndim == 4:
        return np.einsum("nm,knlq,qr->kmlr", W, H, W)
    raise ValueError("Hessian must be (P, P) or (K, P, K, P)")
