"""Dense complex kernels: commutators, matrix exponentials, exponential
actions with commutator-aware Taylor loops, and directional derivatives of
the exponential through auxiliary block matrices.

Conventions
-----------
Generators are "-i free": the actions compute ``exp(-i L dt) v``.  Every
action function accepts either a dense square array or a callable
``apply(x) -> L @ x``.  Dense arrays go through the compiled kernels in
:mod:`lgrape._kernels`; callables run a plain Python loop and need an
explicit ``nsteps`` because their norm is not known.
"""

from __future__ import annotations

import math
from typing import Callable, Union

import numpy as np

from . import _kernels
from ._kernels import MAX_TERMS, TAYLOR_TOL

Operator = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


class ConvergenceError(ArithmeticError):
    """Taylor series did not reach the truncation tolerance."""


def _as_square(a, name="matrix"):
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def commutator(a, b):
    """Return ``a @ b - b @ a``."""
    a = _as_square(a, "a")
    b = _as_square(b, "b")
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def norm1(a):
    """Exact matrix 1-norm (maximum absolute column sum)."""
    return float(np.abs(a).sum(axis=-2).max(initial=0.0))


def expm(a):
    """Matrix exponential by scaling and squaring of the Taylor series.

    Accepts a single ``(n, n)`` matrix or a stack ``(..., n, n)``.  The
    scaling brings every matrix to 1-norm at most one; the series is cut
    when the Frobenius norm of the next term drops below ``1e-14`` of the
    running sum.
    """
    a = _as_square(a)
    if not np.all(np.isfinite(a)):
        raise ValueError("expm: non-finite entries in input")
    shape = a.shape
    stack = np.ascontiguousarray(a.reshape((-1,) + shape[-2:]), dtype=np.complex128)
    out, failed = _kernels.expm_batch(stack, TAYLOR_TOL, MAX_TERMS)
    if failed >= 0:
        raise ConvergenceError(f"expm: Taylor series failed for batch entry {failed}")
    out = out.reshape(shape)
    if not np.iscomplexobj(a):
        out = out.real.copy()
    return out


def expm_dirdiff(a, da):
    """Exponential and its directional derivative.

    Exponentiates the auxiliary block matrix ``[[a, da], [0, a]]``; the
    diagonal block is ``exp(a)``, the upper-right block is the derivative of
    ``exp(a)`` along ``da``.  Only the two distinct blocks are carried
    through the series and the squarings.  Works on stacks as well.

    Returns
    -------
    (exp_a, dexp_a) : tuple of ndarray
    """
    a = _as_square(a, "a")
    da = _as_square(da, "da")
    if a.shape != da.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {da.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(da))):
        raise ValueError("expm_dirdiff: non-finite entries in input")
    shape = a.shape
    real = not (np.iscomplexobj(a) or np.iscomplexobj(da))
    flat = (-1,) + shape[-2:]
    a_ = np.ascontiguousarray(a.reshape(flat), dtype=np.complex128)
    d_ = np.ascontiguousarray(da.reshape(flat), dtype=np.complex128)
    e, de, failed = _kernels.dexp_batch(a_, d_, TAYLOR_TOL, MAX_TERMS)
    if failed >= 0:
        raise ConvergenceError(f"expm_dirdiff: Taylor series failed for batch entry {failed}")
    e, de = e.reshape(shape), de.reshape(shape)
    if real:
        e, de = e.real.copy(), de.real.copy()
    return e, de


def substeps(generator_norm1, dt, theta=_kernels.THETA):
    """Substep count keeping each substep generator 1-norm at most ``theta``."""
    return max(1, int(math.ceil(generator_norm1 * abs(dt) / theta)))


def _vector(v):
    return np.ascontiguousarray(v, dtype=np.complex128)


def _dense(op):
    return isinstance(op, np.ndarray)


def _apply(op, x):
    return op @ x if _dense(op) else op(x)


def _check_failed(failed, where):
    if failed >= 0:
        raise ConvergenceError(
            f"{where}: Taylor series did not converge within {MAX_TERMS} terms "
            f"in substep {failed}"
        )


def _python_loop(make_term, v, nsteps, where):
    out = v.copy()
    for step in range(nsteps):
        term = out.copy()
        acc = out.copy()
        for k in range(1, MAX_TERMS + 1):
            term = make_term(term, k)
            acc = acc + term
            if np.linalg.norm(term) <= TAYLOR_TOL * np.linalg.norm(acc):
                break
        else:
            _check_failed(step, where)
        out = acc
    return out


def expm_action(apply: Operator, v, dt, nsteps=None):
    """``exp(-i L dt) @ v`` from matrix-vector products only.

    Parameters
    ----------
    apply : ndarray or callable
        The generator ``L`` or a function returning ``L @ x``.
    v : array_like
        State vector.
    dt : float
        Time step.
    nsteps : int, optional
        Number of substeps.  Defaults to ``ceil(||L||_1 dt)`` for dense
        input; required for callables.
    """
    v = _vector(v)
    if nsteps is None:
        if not _dense(apply):
            raise ValueError("nsteps is required for callable generators")
        nsteps = substeps(norm1(apply), dt)
    h = dt / nsteps
    if _dense(apply):
        L = np.ascontiguousarray(apply, dtype=np.complex128)
        out, failed = _kernels.taylor1(L, v, h, int(nsteps), TAYLOR_TOL, MAX_TERMS)
        _check_failed(failed, "expm_action")
        return out

    def term(x, k):
        return (-1j * h / k) * apply(x)

    return _python_loop(term, v, int(nsteps), "expm_action")


def twopoint_generator(L, R, dt):
    """Assembled generator ``(L + R)/2 + (i/6)[L, R] dt``."""
    return 0.5 * (L + R) + (1j * dt / 6.0) * commutator(L, R)


def threepoint_generator(L, M, R, dt):
    """Assembled generator ``(L + 4M + R)/6 + (i/12)[L, R] dt``."""
    return (L + 4.0 * M + R) / 6.0 + (1j * dt / 12.0) * commutator(L, R)


def expm_action_twopoint(apply_L: Operator, apply_R: Operator, v, dt, nsteps=None):
    """Two-point (left/right edge) commutator-corrected exponential action.

    Four generator applications per Taylor term; the products ``L x`` and
    ``R x`` are reused inside the commutator.
    """
    v = _vector(v)
    dense = _dense(apply_L) and _dense(apply_R)
    if nsteps is None:
        if not dense:
            raise ValueError("nsteps is required for callable generators")
        nsteps = substeps(norm1(twopoint_generator(apply_L, apply_R, dt)), dt)
    h = dt / nsteps
    if dense:
        L = np.ascontiguousarray(apply_L, dtype=np.complex128)
        R = np.ascontiguousarray(apply_R, dtype=np.complex128)
        if L.shape != R.shape:
            raise ValueError("edge generators differ in shape")
        out, failed = _kernels.taylor2(L, R, v, h, dt, int(nsteps), TAYLOR_TOL, MAX_TERMS)
        _check_failed(failed, "expm_action_twopoint")
        return out

    c1 = -0.5j * h
    c2 = h * dt / 6.0

    def term(x, k):
        rho_a = _apply(apply_L, x)
        rho_b = _apply(apply_R, x)
        return (c1 * (rho_a + rho_b) + c2 * (_apply(apply_L, rho_b) - _apply(apply_R, rho_a))) / k

    return _python_loop(term, v, int(nsteps), "expm_action_twopoint")


def expm_action_threepoint(apply_L: Operator, apply_M: Operator, apply_R: Operator,
                           v, dt, nsteps=None):
    """Three-point (Simpson-weighted) commutator-corrected exponential action.

    Five generator applications per Taylor term.
    """
    v = _vector(v)
    dense = _dense(apply_L) and _dense(apply_M) and _dense(apply_R)
    if nsteps is None:
        if not dense:
            raise ValueError("nsteps is required for callable generators")
        nsteps = substeps(norm1(threepoint_generator(apply_L, apply_M, apply_R, dt)), dt)
    h = dt / nsteps
    if dense:
        L = np.ascontiguousarray(apply_L, dtype=np.complex128)
        M = np.ascontiguousarray(apply_M, dtype=np.complex128)
        R = np.ascontiguousarray(apply_R, dtype=np.complex128)
        if not (L.shape == M.shape == R.shape):
            raise ValueError("generators differ in shape")
        out, failed = _kernels.taylor3(L, M, R, v, h, dt, int(nsteps), TAYLOR_TOL, MAX_TERMS)
        _check_failed(failed, "expm_action_threepoint")
        return out

    c1 = -1j * h / 6.0
    c2 = h * dt / 12.0

    def term(x, k):
        rho_a = _apply(apply_L, x)
        rho_b = _apply(apply_R, x)
        rho_m = _apply(apply_M, x)
        return (c1 * (rho_a + 4.0 * rho_m + rho_b)
                + c2 * (_apply(apply_L, rho_b) - _apply(apply_R, rho_a))) / k

    return _python_loop(term, v, int(nsteps), "expm_action_threepoint")
