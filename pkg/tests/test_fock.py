import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kposim import fock
from kposim.errors import DimensionMismatch, NotHermitian, ToleranceFailure, TruncationError


@pytest.mark.parametrize("dim", [2, 5, 30])
def test_canonical_commutator_except_last_level(dim):
    a = fock.annihilation(dim)
    c = fock.commutator(a, fock.creation(dim))
    expected = np.eye(dim)
    # truncation breaks [a, a^+] = 1 on the top level only
    expected[-1, -1] = 1 - dim
    assert np.allclose(c, expected)


def test_number_operator_is_adag_a():
    dim = 12
    a = fock.annihilation(dim)
    assert np.allclose(a.conj().T @ a, fock.number(dim))


def test_parity_anticommutes_with_a():
    dim = 9
    par = fock.parity_operator(dim)
    a = fock.annihilation(dim)
    assert np.allclose(par @ a + a @ par, 0)


def test_bad_dims():
    with pytest.raises(DimensionMismatch):
        fock.annihilation(1)
    with pytest.raises(DimensionMismatch):
        fock.number(3.5)


def test_fock_state_out_of_range():
    with pytest.raises(TruncationError):
        fock.fock_state(4, 4)


def test_coherent_state_too_large_for_space():
    with pytest.raises(TruncationError):
        fock.coherent_state(4, 1.0)


def test_coherent_vacuum():
    assert np.allclose(fock.coherent_state(6, 0), fock.fock_state(6, 0))


@settings(max_examples=40, deadline=None)
@given(r=st.floats(0.0, 2.5), phi=st.floats(-np.pi, np.pi))
def test_coherent_state_moments(r, phi):
    dim = 40
    alpha = r * np.exp(1j * phi)
    psi = fock.coherent_state(dim, alpha)
    rho = fock.ket_to_dm(psi)
    assert abs(np.linalg.norm(psi) - 1) < 1e-12
    assert abs(fock.expect(fock.annihilation(dim), rho) - alpha) < 1e-6
    assert abs(fock.expect(fock.number(dim), rho) - r * r) < 1e-6


def test_coherent_x_quadrature_is_real_part():
    dim = 40
    rho = fock.ket_to_dm(fock.coherent_state(dim, 2.8))
    assert abs(fock.expect(fock.x_quadrature(dim), rho) - 2.8) < 1e-8


def test_cat_state_parity():
    dim = 40
    even = fock.cat_state(dim, 2.0, +1)
    odd = fock.cat_state(dim, 2.0, -1)
    par = fock.parity_operator(dim)
    assert abs(even.conj() @ par @ even - 1) < 1e-12
    assert abs(odd.conj() @ par @ odd + 1) < 1e-12


def test_tail_mass_matches_poisson_sum():
    from math import exp, factorial

    dim, mean = 10, 3.0
    direct = 1 - sum(exp(-mean) * mean ** n / factorial(n) for n in range(dim))
    assert abs(fock.coherent_tail_mass(dim, np.sqrt(mean)) - direct) < 1e-14


def test_require_hermitian():
    m = np.array([[1, 1j], [0, 2]])
    with pytest.raises(NotHermitian):
        fock.require_hermitian(m)
    fock.require_hermitian(np.array([[1, 1j], [-1j, 2]]))
    assert fock.hermiticity_error(np.zeros((3, 3))) == 0.0


def test_check_density_flags_each_invariant():
    rho = fock.ket_to_dm(fock.fock_state(3, 1))
    fock.check_density(rho)
    with pytest.raises(ToleranceFailure, match="trace"):
        fock.check_density(1.01 * rho)
    bad = rho.copy()
    bad[0, 1] = 1e-3
    with pytest.raises(ToleranceFailure, match="Hermitian"):
        fock.check_density(bad)
    neg = np.diag([1.1, -0.1, 0.0]).astype(complex)
    with pytest.raises(ToleranceFailure, match="eigenvalue"):
        fock.check_density(neg)


def test_as_density_accepts_ket_and_matrix():
    psi = np.array([1, 1j, 0]) * 2
    rho = fock.as_density(psi)
    assert abs(np.trace(rho) - 1) < 1e-14
    assert fock.as_density(rho) is not None
    with pytest.raises(DimensionMismatch):
        fock.as_density(np.zeros((2, 3)))
