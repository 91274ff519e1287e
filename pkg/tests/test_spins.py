import numpy as np
import pytest
import scipy.linalg

from conftest import random_hermitian
from lgrape.linalg import commutator, expm
from lgrape.spins import (MAX_SPINS, Quadrupolar, RadiationDamping, SpinChain,
                          cartesian_basis, chain_hamiltonian, embed, hamiltonian_superop,
                          liouvillian, powder_splittings, quadrupolar_drift,
                          raddamp_generator, raddamp_matrix, raddamp_rhs, relaxation_superop,
                          restrict, spin_operators, tilted_state, unvec, vec)


@pytest.mark.parametrize("spin", [0.5, 1])
def test_spin_operator_algebra(spin):
    sx, sy, sz = spin_operators(spin)
    np.testing.assert_allclose(commutator(sx, sy), 1j * sz, atol=1e-15)
    np.testing.assert_allclose(commutator(sy, sz), 1j * sx, atol=1e-15)
    casimir = sx @ sx + sy @ sy + sz @ sz
    np.testing.assert_allclose(casimir, spin * (spin + 1) * np.eye(sx.shape[0]), atol=1e-15)


def test_unsupported_spin():
    with pytest.raises(ValueError):
        spin_operators(1.5)


def test_embed():
    sx, _, sz = spin_operators()
    out = embed(sz, 1, 3)
    assert out.shape == (8, 8)
    np.testing.assert_allclose(out, np.kron(np.kron(np.eye(2), sz), np.eye(2)))


def test_chain_hamiltonian_two_spins():
    w = [3.0, -2.0]
    j = 5.0
    drift, (cx, cy) = chain_hamiltonian(SpinChain(w, [j]))
    sx, sy, sz = spin_operators()
    ref = (w[0] * np.kron(sz, np.eye(2)) + w[1] * np.kron(np.eye(2), sz)
           + j * sum(np.kron(a, a) for a in (sx, sy, sz)))
    np.testing.assert_allclose(drift, ref)
    np.testing.assert_allclose(cx, np.kron(sx, np.eye(2)) + np.kron(np.eye(2), sx))
    np.testing.assert_allclose(cy, cy.conj().T)


def test_chain_validation():
    with pytest.raises(ValueError):
        SpinChain([1.0, 2.0], [])
    with pytest.raises(ValueError):
        SpinChain([], [])
    with pytest.raises(ValueError):
        SpinChain([1.0], [], r1=-1)
    with pytest.raises(ValueError):
        chain_hamiltonian(SpinChain([0.0] * (MAX_SPINS + 1), [0.0] * MAX_SPINS))


def test_liouvillian_reproduces_commutator(rng):
    h = random_hermitian(rng, 4)
    rho = random_hermitian(rng, 4)
    L = liouvillian(h)
    np.testing.assert_allclose(unvec(L @ vec(rho)), commutator(h, rho), atol=1e-14)
    np.testing.assert_allclose(hamiltonian_superop(h), L)


def test_liouville_propagation_matches_conjugation(rng):
    h = random_hermitian(rng, 3, 4.0)
    rho = random_hermitian(rng, 3)
    u = scipy.linalg.expm(-1j * h * 0.6)
    out = unvec(scipy.linalg.expm(-1j * 0.6 * liouvillian(h)) @ vec(rho))
    np.testing.assert_allclose(out, u @ rho @ u.conj().T, atol=1e-12)


def test_liouvillian_rejects_non_hermitian():
    with pytest.raises(ValueError):
        liouvillian(np.array([[0, 1], [0, 0]]))


def test_relaxation_decays_coherences_and_keeps_trace():
    r1, r2, t = 3.0, 7.0, 0.2
    L = liouvillian(np.zeros((2, 2)), r1, r2)
    rho = np.array([[0.8, 0.3 + 0.1j], [0.3 - 0.1j, 0.2]])
    out = unvec(scipy.linalg.expm(-1j * t * L) @ vec(rho))
    np.testing.assert_allclose(np.trace(out), 1.0, atol=1e-14)
    np.testing.assert_allclose(out[0, 1], rho[0, 1] * np.exp(-r2 * t), atol=1e-14)
    np.testing.assert_allclose(out[0, 0] - out[1, 1], 0.6 * np.exp(-r1 * t), atol=1e-14)
    assert relaxation_superop(3, 1.0, 1.0).shape == (9, 9)


def test_restriction_is_exact_for_spin_half(rng):
    h = random_hermitian(rng, 2, 5.0)
    B = cartesian_basis()
    assert B.shape == (3, 4)
    np.testing.assert_allclose(B.conj() @ B.T, np.eye(3), atol=1e-15)
    L = liouvillian(h)
    small = restrict(L, B)
    rho = spin_operators()[2]
    full = scipy.linalg.expm(-1j * 0.7 * L) @ vec(rho)
    coords = expm(-1j * 0.7 * small) @ (B.conj() @ vec(rho))
    np.testing.assert_allclose(B.T @ coords, full, atol=1e-12)


def test_raddamp_generator_matches_rhs(rng):
    p = RadiationDamping(omega=lambda t: 3.0 + t, r1=2.0, r2=5.0, k_rd=40.0, mu_eq=1.0)
    for _ in range(5):
        mu = rng.normal(size=3)
        t = rng.uniform()
        x = np.concatenate([mu, [1.0]])
        lhs = (-1j * raddamp_generator(p, x, t) @ x)[:3]
        np.testing.assert_allclose(lhs.real, raddamp_rhs(p, t, mu), atol=1e-12)
        assert np.allclose(lhs.imag, 0)
    m = raddamp_matrix(p, x, t)
    assert m.shape == (3, 3)


def test_raddamp_norm_flow_without_relaxation():
    # with r1 = r2 = 0 the damping term changes |mu|^2 at -4 k mu_z (mu_x^2 + mu_y^2)
    p = RadiationDamping(omega=4.0, k_rd=40.0)
    mu = np.array([0.3, -0.2, -0.9])
    rate = 2 * np.dot(mu, raddamp_rhs(p, 0.0, mu))
    assert rate == pytest.approx(-4 * 40.0 * mu[2] * (0.09 + 0.04))


def test_raddamp_fixed_point():
    p = RadiationDamping(omega=0.0, k_rd=40.0)
    x = np.array([0.0, 0.0, -1.0, 1.0])
    np.testing.assert_array_equal(raddamp_generator(p, x) @ x, 0)
    assert not np.any(raddamp_matrix(RadiationDamping(omega=2.0, r2=1.0), x)[2, :2])


def test_raddamp_rejects_negative_rates():
    with pytest.raises(ValueError):
        RadiationDamping(k_rd=-1.0)


def test_tilted_state():
    s = tilted_state(90, augmented=False)
    np.testing.assert_allclose(s, [1, 0, 0], atol=1e-15)
    a = tilted_state(2.0)
    assert a.shape == (4,) and a[3] == 1
    np.testing.assert_allclose(np.linalg.norm(a[:3]), 1.0)
    assert a[2].real < 0


def test_quadrupolar_drift_spectrum():
    d = quadrupolar_drift(Quadrupolar(wq=6.0, offset=0.0))
    np.testing.assert_allclose(np.diag(d).real, [2.0, -4.0, 2.0])
    assert abs(np.trace(d)) < 1e-14


def test_powder_splittings():
    w = powder_splittings(2.0, 4)
    c = np.array([0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(w, 3 * c * c - 1)
    # the average of P2(cos) over the sphere vanishes; midpoint error is O(1/n^2)
    assert abs(powder_splittings(1.0, 200).mean()) < 1e-5
