"""Spin operators and the drift/control generators used by the benchmarks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_SPINS = 12


def spin_operators(spin=0.5):
    """Cartesian angular momentum matrices ``(Sx, Sy, Sz)`` for spin 1/2 or 1."""
    if spin == 0.5:
        sx = np.array([[0, 1], [1, 0]], dtype=complex) / 2
        sy = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
        sz = np.array([[1, 0], [0, -1]], dtype=complex) / 2
    elif spin == 1:
        r = 1 / np.sqrt(2)
        sx = np.array([[0, r, 0], [r, 0, r], [0, r, 0]], dtype=complex)
        sy = np.array([[0, -1j * r, 0], [1j * r, 0, -1j * r], [0, 1j * r, 0]], dtype=complex)
        sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    else:
        raise ValueError(f"unsupported spin quantum number {spin!r}; use 0.5 or 1")
    return sx, sy, sz


def embed(op, site, n_spins):
    """Kronecker-embed a single-spin operator at ``site`` of an ``n_spins`` chain."""
    dim = op.shape[0]
    out = np.eye(1, dtype=complex)
    for i in range(n_spins):
        out = np.kron(out, op if i == site else np.eye(dim))
    return out


@dataclass
class SpinChain:
    """Linear chain of spins with offsets and nearest-neighbour scalar couplings.

    All frequencies in rad/s; relaxation rates in 1/s.
    """

    offsets: Sequence[float]
    couplings: Sequence[float] = field(default_factory=list)
    spin: float = 0.5
    r1: float = 0.0
    r2: float = 0.0

    def __post_init__(self):
        self.offsets = [float(x) for x in self.offsets]
        self.couplings = [float(x) for x in self.couplings]
        if not self.offsets:
            raise ValueError("chain needs at least one spin")
        if len(self.couplings) != len(self.offsets) - 1:
            raise ValueError("need exactly n_spins - 1 couplings")
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError("relaxation rates must be non-negative")

    @property
    def n_spins(self):
        return len(self.offsets)


def chain_hamiltonian(chain: SpinChain):
    """Drift Hamiltonian and total ``Sx``/``Sy`` control operators of a chain."""
    n = chain.n_spins
    if n > MAX_SPINS:
        raise ValueError(f"{n} spins exceeds the dense-matrix guard of {MAX_SPINS}")
    ops = spin_operators(chain.spin)
    site = [[embed(o, i, n) for o in ops] for i in range(n)]
    drift = sum(w * site[i][2] for i, w in enumerate(chain.offsets))
    for i, j in enumerate(chain.couplings):
        if j:
            drift = drift + j * sum(site[i][a] @ site[i + 1][a] for a in range(3))
    cx = sum(s[0] for s in site)
    cy = sum(s[1] for s in site)
    return np.asarray(drift, dtype=complex), [cx, cy]


def hamiltonian_superop(h):
    """Commutation superoperator ``H (x) 1 - 1 (x) H^T`` for row-major ``vec``."""
    h = np.asarray(h, dtype=complex)
    one = np.eye(h.shape[0])
    return np.kron(h, one) - np.kron(one, h.T)


def relaxation_superop(dim, r1=0.0, r2=0.0):
    """Relaxation superoperator ``R`` with ``d vec(rho)/dt = R vec(rho)``.

    Coherences ``rho[i, j]`` (``i != j``) decay at ``r2``.  Populations relax
    towards their mean at ``r1``, so population differences decay at ``r1``
    and the trace is conserved.
    """
    R = np.zeros((dim * dim, dim * dim))
    idx = np.arange(dim * dim).reshape(dim, dim)
    off = ~np.eye(dim, dtype=bool)
    R[idx[off], idx[off]] = -r2
    diag = np.diag(idx)
    R[np.ix_(diag, diag)] = -r1 * (np.eye(dim) - np.full((dim, dim), 1.0 / dim))
    return R


def liouvillian(h, r1=0.0, r2=0.0, tol=1e-12):
    """Liouville-space generator ``K + iR`` of ``d rho/dt = -i L rho``.

    ``rho`` is vectorised row-major (``rho.reshape(-1)``).
    """
    h = np.asarray(h, dtype=complex)
    scale = max(np.linalg.norm(h), 1.0)
    if np.linalg.norm(h - h.conj().T) > tol * scale:
        raise ValueError("liouvillian: Hamiltonian is not Hermitian")
    L = hamiltonian_superop(h)
    if r1 or r2:
        L = L + 1j * relaxation_superop(h.shape[0], r1, r2)
    return L


def restrict(superop, basis):
    """Matrix of ``superop`` on the span of orthonormal ``basis`` vectors.

    Exact when the span is invariant, e.g. the traceless operators under a
    commutation superoperator.  ``basis`` is ``(m, dim)``; the result is
    ``(m, m)`` with entries ``<b_i| L |b_j>``.
    """
    B = np.asarray(basis, dtype=complex)
    return B.conj() @ np.asarray(superop) @ B.T


def cartesian_basis(spin=0.5):
    """Orthonormal ``vec`` images of ``Sx, Sy, Sz``, shape ``(3, dim**2)``."""
    out = []
    for op in spin_operators(spin):
        v = vec(op)
        out.append(v / np.linalg.norm(v))
    return np.stack(out)


def vec(rho):
    return np.ascontiguousarray(np.asarray(rho, dtype=complex).reshape(-1))


def unvec(v):
    n = int(round(np.sqrt(v.shape[-1])))
    return np.asarray(v).reshape(v.shape[:-1] + (n, n))


# -- radiation damping ---------------------------------------------------------

@dataclass(frozen=True)
class RadiationDamping:
    """Modified Bloch equation parameters.

    ``omega`` may be a constant (rad/s) or a callable ``t -> omega(t)``.
    """

    omega: object = 0.0
    r1: float = 0.0
    r2: float = 0.0
    k_rd: float = 0.0
    mu_eq: float = 0.0

    def __post_init__(self):
        if min(self.r1, self.r2, self.k_rd) < 0:
            raise ValueError("rates must be non-negative")

    def omega_at(self, t):
        return float(self.omega(t)) if callable(self.omega) else float(self.omega)


def raddamp_matrix(p: RadiationDamping, state, t=0.0):
    """Pseudolinear matrix ``M`` with ``d mu/dt = -M mu`` (3x3, real).

    The equilibrium term is not included; see :func:`raddamp_generator`.
    """
    mx, my, mz = (float(np.real(x)) for x in state[:3])
    w = p.omega_at(t)
    k = p.k_rd
    d = p.r2 + k * mz
    return np.array([[d, w, 0.0],
                     [-w, d, 0.0],
                     [k * mx, k * my, p.r1]])


def raddamp_generator(p: RadiationDamping, state, t=0.0):
    """State-dependent generator on the augmented state ``(mx, my, mz, 1)``.

    Returns ``L`` (4x4 complex) such that ``dx/dt = -i L x`` reproduces the
    modified Bloch equations including the relaxation towards ``mu_eq``.
    """
    g = np.zeros((4, 4))
    g[:3, :3] = -raddamp_matrix(p, state, t)
    g[2, 3] = p.r1 * p.mu_eq
    return 1j * g.astype(complex)


def raddamp_rhs(p: RadiationDamping, t, mu):
    """Right-hand side of the modified Bloch equations in their original form."""
    mx, my, mz = mu
    w = p.omega_at(t)
    k = p.k_rd
    return np.array([
        -p.r2 * mx - w * my - k * mx * mz,
        w * mx - p.r2 * my - k * my * mz,
        -p.r1 * (mz - p.mu_eq) - k * (mx * mx + my * my),
    ])


def tilted_state(angle_deg, augmented=True):
    """Magnetisation tilted by ``angle_deg`` from ``-Z`` towards ``+X``."""
    a = np.deg2rad(angle_deg)
    mu = [np.sin(a), 0.0, -np.cos(a)]
    return np.array(mu + [1.0] if augmented else mu, dtype=complex)


# -- quadrupolar spin-1 ---------------------------------------------------------

@dataclass(frozen=True)
class Quadrupolar:
    """Spin-1 with first-order quadrupolar splitting ``wq`` and ``offset`` (rad/s)."""

    wq: float
    offset: float = 0.0


def quadrupolar_drift(q: Quadrupolar):
    """``offset * Sz + wq * (Sz^2 - 2/3)`` for a single spin-1."""
    _, _, sz = spin_operators(1)
    return q.offset * sz + q.wq * (sz @ sz - (2.0 / 3.0) * np.eye(3))


def powder_splittings(wq_max, n):
    """Orientation ensemble ``wq_max (3 cos^2 th - 1)/2`` on a uniform ``cos th`` grid.

    The grid uses cell midpoints over ``[0, 1]`` so every member has equal
    weight.
    """
    c = (np.arange(n) + 0.5) / n
    return wq_max * (3 * c * c - 1) / 2
