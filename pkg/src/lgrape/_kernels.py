"""Hot inner loops: Taylor exponential actions, batched Taylor ``expm`` and
its directional derivative, and the two-state RLC recursion.

Each kernel exists twice, a numba version (``*_nb``) and a numpy version
(``*_np``).  The public names at the bottom of the module point at one of
them depending on ``lgrape._accel.USE_NUMBA``.  Both paths take and return
contiguous complex128 arrays and report non-convergence by returning the
index of the failing substep (``-1`` on success) instead of raising, so the
numba versions stay exception free.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

TAYLOR_TOL = 1e-14
MAX_TERMS = 64
THETA = 1.0


# ---------------------------------------------------------------------------
# numpy versions


def _norm(x):
    return math.sqrt(float(np.vdot(x, x).real))


def _taylor1_np(L, v, h, nsteps, tol, maxterms):
    out = v.copy()
    for step in range(nsteps):
        term = out.copy()
        acc = out.copy()
        done = False
        for k in range(1, maxterms + 1):
            term = (-1j * h / k) * (L @ term)
            acc += term
            if _norm(term) <= tol * _norm(acc):
                done = True
                break
        if not done:
            return out, step
        out = acc
    return out, -1


def _taylor2_np(L, R, v, h, t, nsteps, tol, maxterms):
    out = v.copy()
    c1 = -0.5j * h
    c2 = h * t / 6.0
    for step in range(nsteps):
        term = out.copy()
        acc = out.copy()
        done = False
        for k in range(1, maxterms + 1):
            rho_a = L @ term
            rho_b = R @ term
            term = (c1 * (rho_a + rho_b) + c2 * (L @ rho_b - R @ rho_a)) / k
            acc += term
            if _norm(term) <= tol * _norm(acc):
                done = True
                break
        if not done:
            return out, step
        out = acc
    return out, -1


def _taylor3_np(L, M, R, v, h, t, nsteps, tol, maxterms):
    out = v.copy()
    c1 = -1j * h / 6.0
    c2 = h * t / 12.0
    for step in range(nsteps):
        term = out.copy()
        acc = out.copy()
        done = False
        for k in range(1, maxterms + 1):
            rho_a = L @ term
            rho_b = R @ term
            rho_m = M @ term
            term = (c1 * (rho_a + 4.0 * rho_m + rho_b)
                    + c2 * (L @ rho_b - R @ rho_a)) / k
            acc += term
            if _norm(term) <= tol * _norm(acc):
                done = True
                break
        if not done:
            return out, step
        out = acc
    return out, -1


def _squarings(norms, theta):
    s = np.zeros(norms.shape, dtype=np.int64)
    big = norms > theta
    s[big] = np.ceil(np.log2(norms[big] / theta)).astype(np.int64)
    return s


def _expm_batch_np(A, tol, maxterms):
    """Scaling and squaring over the Taylor series, stacked ``(B, n, n)``."""
    nb, n, _ = A.shape
    if nb == 0:
        return A.copy(), -1
    norms = np.abs(A).sum(axis=1).max(axis=1)
    s = _squarings(norms, THETA)
    X = A / (2.0 ** s)[:, None, None]
    eye = np.broadcast_to(np.eye(n, dtype=A.dtype), A.shape)
    acc = eye.copy()
    term = eye.copy()
    done = False
    for k in range(1, maxterms + 1):
        term = (term @ X) / k
        acc += term
        tn = np.sqrt((term.real ** 2 + term.imag ** 2).sum(axis=(1, 2)))
        an = np.sqrt((acc.real ** 2 + acc.imag ** 2).sum(axis=(1, 2)))
        if np.all(tn <= tol * an):
            done = True
            break
    if not done:
        return acc, int(np.argmax(tn > tol * an))
    for j in range(int(s.max(initial=0))):
        sel = s > j
        if sel.all():
            acc = acc @ acc
        else:
            acc[sel] = acc[sel] @ acc[sel]
    return acc, -1


def _dexp_batch_np(A, D, tol, maxterms):
    """``exp`` of the block matrix ``[[A, D], [0, A]]`` without forming it.

    Returns the two distinct blocks ``(exp(A), dexp)``.  Scaling, series cut
    and squarings are those of the full auxiliary matrix.
    """
    nb, n, _ = A.shape
    if nb == 0:
        return A.copy(), D.copy(), -1
    ca = np.abs(A).sum(axis=1)
    norms = (ca + np.abs(D).sum(axis=1)).max(axis=1)
    s = _squarings(norms, THETA)
    f = (2.0 ** s)[:, None, None]
    X = A / f
    dX = D / f
    eye = np.broadcast_to(np.eye(n, dtype=A.dtype), A.shape)
    acc, term = eye.copy(), eye.copy()
    dacc = np.zeros_like(A)
    dterm = np.zeros_like(A)
    done = False
    for k in range(1, maxterms + 1):
        dterm = (term @ dX + dterm @ X) / k
        term = (term @ X) / k
        acc += term
        dacc += dterm
        tn = np.sqrt(2 * (np.abs(term) ** 2).sum(axis=(1, 2)) + (np.abs(dterm) ** 2).sum(axis=(1, 2)))
        an = np.sqrt(2 * (np.abs(acc) ** 2).sum(axis=(1, 2)) + (np.abs(dacc) ** 2).sum(axis=(1, 2)))
        if np.all(tn <= tol * an):
            done = True
            break
    if not done:
        return acc, dacc, int(np.argmax(tn > tol * an))
    for j in range(int(s.max(initial=0))):
        sel = s > j
        e, d = acc[sel], dacc[sel]
        acc[sel] = e @ e
        dacc[sel] = e @ d + d @ e
    return acc, dacc, -1


def _rlc_np(phi, g0, g1, u):
    """Two-state recursion ``x[k+1] = phi x[k] + g0 u[k] + g1 u[k+1]``; output is state 1."""
    n = u.shape[0]
    y = np.zeros(n)
    x0 = 0.0
    x1 = 0.0
    p00, p01, p10, p11 = phi[0, 0], phi[0, 1], phi[1, 0], phi[1, 1]
    a0, a1, b0, b1 = g0[0], g0[1], g1[0], g1[1]
    for k in range(n - 1):
        uk = u[k]
        un = u[k + 1]
        n0 = p00 * x0 + p01 * x1 + a0 * uk + b0 * un
        n1 = p10 * x0 + p11 * x1 + a1 * uk + b1 * un
        x0, x1 = n0, n1
        y[k + 1] = x1
    return y


# ---------------------------------------------------------------------------
# numba versions


@njit
def _matvec(A, x, out):
    n = A.shape[0]
    for i in range(n):
        s = 0j
        for j in range(n):
            s += A[i, j] * x[j]
        out[i] = s


@njit
def _vnorm(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i].real * x[i].real + x[i].imag * x[i].imag
    return math.sqrt(s)


@njit
def _taylor1_nb(L, v, h, nsteps, tol, maxterms):
    n = v.shape[0]
    out = v.copy()
    term = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)
    acc = np.empty(n, dtype=np.complex128)
    for step in range(nsteps):
        term[:] = out
        acc[:] = out
        done = False
        for k in range(1, maxterms + 1):
            _matvec(L, term, tmp)
            c = -1j * h / k
            for i in range(n):
                term[i] = c * tmp[i]
                acc[i] += term[i]
            if _vnorm(term) <= tol * _vnorm(acc):
                done = True
                break
        if not done:
            return out, step
        out[:] = acc
    return out, -1


@njit
def _taylor2_nb(L, R, v, h, t, nsteps, tol, maxterms):
    n = v.shape[0]
    out = v.copy()
    term = np.empty(n, dtype=np.complex128)
    acc = np.empty(n, dtype=np.complex128)
    ra = np.empty(n, dtype=np.complex128)
    rb = np.empty(n, dtype=np.complex128)
    lb = np.empty(n, dtype=np.complex128)
    rr = np.empty(n, dtype=np.complex128)
    c1 = -0.5j * h
    c2 = h * t / 6.0
    for step in range(nsteps):
        term[:] = out
        acc[:] = out
        done = False
        for k in range(1, maxterms + 1):
            _matvec(L, term, ra)
            _matvec(R, term, rb)
            _matvec(L, rb, lb)
            _matvec(R, ra, rr)
            for i in range(n):
                term[i] = (c1 * (ra[i] + rb[i]) + c2 * (lb[i] - rr[i])) / k
                acc[i] += term[i]
            if _vnorm(term) <= tol * _vnorm(acc):
                done = True
                break
        if not done:
            return out, step
        out[:] = acc
    return out, -1


@njit
def _taylor3_nb(L, M, R, v, h, t, nsteps, tol, maxterms):
    n = v.shape[0]
    out = v.copy()
    term = np.empty(n, dtype=np.complex128)
    acc = np.empty(n, dtype=np.complex128)
    ra = np.empty(n, dtype=np.complex128)
    rb = np.empty(n, dtype=np.complex128)
    rm = np.empty(n, dtype=np.complex128)
    lb = np.empty(n, dtype=np.complex128)
    rr = np.empty(n, dtype=np.complex128)
    c1 = -1j * h / 6.0
    c2 = h * t / 12.0
    for step in range(nsteps):
        term[:] = out
        acc[:] = out
        done = False
        for k in range(1, maxterms + 1):
            _matvec(L, term, ra)
            _matvec(R, term, rb)
            _matvec(M, term, rm)
            _matvec(L, rb, lb)
            _matvec(R, ra, rr)
            for i in range(n):
                term[i] = (c1 * (ra[i] + 4.0 * rm[i] + rb[i])
                           + c2 * (lb[i] - rr[i])) / k
                acc[i] += term[i]
            if _vnorm(term) <= tol * _vnorm(acc):
                done = True
                break
        if not done:
            return out, step
        out[:] = acc
    return out, -1


@njit
def _matmul(A, B, out):
    n = A.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j] = 0j
        for p in range(n):
            a = A[i, p]
            if a != 0j:
                for j in range(n):
                    out[i, j] += a * B[p, j]


@njit
def _fnorm(A):
    s = 0.0
    n = A.shape[0]
    for i in range(n):
        for j in range(n):
            s += A[i, j].real * A[i, j].real + A[i, j].imag * A[i, j].imag
    return math.sqrt(s)


@njit
def _expm_batch_nb(A, tol, maxterms):
    nb, n, _ = A.shape
    result = np.empty_like(A)
    X = np.empty((n, n), dtype=np.complex128)
    term = np.empty((n, n), dtype=np.complex128)
    tmp = np.empty((n, n), dtype=np.complex128)
    acc = np.empty((n, n), dtype=np.complex128)
    for b in range(nb):
        norm1 = 0.0
        for j in range(n):
            col = 0.0
            for i in range(n):
                col += abs(A[b, i, j])
            if col > norm1:
                norm1 = col
        s = 0
        if norm1 > 1.0:
            s = int(math.ceil(math.log2(norm1)))
        scale = 2.0 ** (-s)
        for i in range(n):
            for j in range(n):
                X[i, j] = A[b, i, j] * scale
                term[i, j] = 1.0 if i == j else 0.0
                acc[i, j] = term[i, j]
        done = False
        for k in range(1, maxterms + 1):
            _matmul(term, X, tmp)
            for i in range(n):
                for j in range(n):
                    term[i, j] = tmp[i, j] / k
                    acc[i, j] += term[i, j]
            if _fnorm(term) <= tol * _fnorm(acc):
                done = True
                break
        if not done:
            return result, b
        for _ in range(s):
            _matmul(acc, acc, tmp)
            acc[:, :] = tmp
        result[b] = acc
    return result, -1


@njit
def _dexp_batch_nb(A, D, tol, maxterms):
    nb, n, _ = A.shape
    E = np.empty_like(A)
    F = np.empty_like(A)
    X = np.empty((n, n), dtype=np.complex128)
    dX = np.empty((n, n), dtype=np.complex128)
    term = np.empty((n, n), dtype=np.complex128)
    dterm = np.empty((n, n), dtype=np.complex128)
    acc = np.empty((n, n), dtype=np.complex128)
    dacc = np.empty((n, n), dtype=np.complex128)
    t1 = np.empty((n, n), dtype=np.complex128)
    t2 = np.empty((n, n), dtype=np.complex128)
    for b in range(nb):
        norm1 = 0.0
        for j in range(n):
            col = 0.0
            for i in range(n):
                col += abs(A[b, i, j]) + abs(D[b, i, j])
            if col > norm1:
                norm1 = col
        s = 0
        if norm1 > 1.0:
            s = int(math.ceil(math.log2(norm1)))
        scale = 2.0 ** (-s)
        for i in range(n):
            for j in range(n):
                X[i, j] = A[b, i, j] * scale
                dX[i, j] = D[b, i, j] * scale
                term[i, j] = 1.0 if i == j else 0.0
                acc[i, j] = term[i, j]
                dterm[i, j] = 0.0
                dacc[i, j] = 0.0
        done = False
        for k in range(1, maxterms + 1):
            _matmul(term, dX, t1)
            _matmul(dterm, X, t2)
            for i in range(n):
                for j in range(n):
                    dterm[i, j] = (t1[i, j] + t2[i, j]) / k
                    dacc[i, j] += dterm[i, j]
            _matmul(term, X, t1)
            for i in range(n):
                for j in range(n):
                    term[i, j] = t1[i, j] / k
                    acc[i, j] += term[i, j]
            tn = math.sqrt(2 * _fnorm(term) ** 2 + _fnorm(dterm) ** 2)
            an = math.sqrt(2 * _fnorm(acc) ** 2 + _fnorm(dacc) ** 2)
            if tn <= tol * an:
                done = True
                break
        if not done:
            return E, F, b
        for _ in range(s):
            _matmul(acc, dacc, t1)
            _matmul(dacc, acc, t2)
            for i in range(n):
                for j in range(n):
                    dacc[i, j] = t1[i, j] + t2[i, j]
            _matmul(acc, acc, t1)
            acc[:, :] = t1
        E[b] = acc
        F[b] = dacc
    return E, F, -1


_rlc_nb = njit(_rlc_np)


# ---------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    taylor1 = _taylor1_nb
    taylor2 = _taylor2_nb
    taylor3 = _taylor3_nb
    expm_batch = _expm_batch_nb
    dexp_batch = _dexp_batch_nb
    rlc_recursion = _rlc_nb
else:
    taylor1 = _taylor1_np
    taylor2 = _taylor2_np
    taylor3 = _taylor3_np
    expm_batch = _expm_batch_np
    dexp_batch = _dexp_batch_np
    rlc_recursion = _rlc_np

BACKEND = "numba" if USE_NUMBA else "numpy"
