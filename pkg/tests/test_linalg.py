import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from qocgpm.linalg import (IDENTITY2, PAULI_X, PAULI_Y, PAULI_Z, anticommutator, check_density_matrix,
                           check_unitary, commutator, commutator_superop, dagger, hs_dist2,
                           hs_inner, is_hermitian, kron, lindblad_superop, linear_entropy,
                           von_neumann_entropy)
from qocgpm.problems import werner_state

from conftest import random_density, random_hermitian

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([2, 3, 4])


def test_kron_oracles():
    assert np.array_equal(kron(IDENTITY2, IDENTITY2), np.eye(4))
    assert np.array_equal(kron(PAULI_Z, IDENTITY2), np.diag([1, 1, -1, -1]))
    assert np.array_equal(kron(PAULI_X, PAULI_X), np.fliplr(np.eye(4)))


def test_hs_inner_oracles():
    assert hs_inner(np.eye(3), np.eye(3)) == 3
    assert hs_inner(PAULI_X, PAULI_Z) == 0
    assert hs_inner(werner_state(1.0), werner_state(1.0)) == pytest.approx(1.0, abs=1e-14)


def test_hs_dist2_oracles():
    rho = np.diag([0.2, 0.8])
    assert hs_dist2(rho, rho) == 0
    assert hs_dist2(np.diag([1, 0]), np.diag([0, 1])) == 2
    assert hs_dist2(np.diag([0, 0.5, 0.5]), np.diag([0.5, 0.25, 0.25])) == pytest.approx(0.375,
                                                                                         abs=1e-15)


def test_commutator_oracles():
    assert np.allclose(commutator(PAULI_X, PAULI_X), 0)
    assert np.allclose(commutator(PAULI_X, PAULI_Z), -2j * PAULI_Y)
    assert np.allclose(anticommutator(PAULI_X, PAULI_Z), 0)


def test_entropy_oracles():
    assert von_neumann_entropy(werner_state(0.1)) == pytest.approx(1.372, abs=1e-3)
    psi = np.array([1, 1j, 0]) / np.sqrt(2)
    assert von_neumann_entropy(np.outer(psi, psi.conj())) == pytest.approx(0.0, abs=1e-12)
    assert linear_entropy(np.eye(4) / 4) == pytest.approx(0.75, abs=1e-15)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        hs_inner(np.eye(2), np.eye(3))


def test_validators_reject_bad_input():
    with pytest.raises(ValueError):
        check_unitary(np.diag([1.0, 2.0]))
    with pytest.raises(ValueError):
        check_density_matrix(np.diag([1.5, -0.5]))


@given(seeds, dims)
def test_hs_inner_self_real_nonnegative(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    v = hs_inner(a, a)
    assert abs(np.imag(v)) <= 1e-12 and np.real(v) >= 0


@given(seeds, dims)
def test_dagger_involution(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert np.array_equal(dagger(dagger(a)), a)


@given(seeds, dims)
def test_hs_inner_hermitian_pair_real(seed, n):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(rng, n), random_hermitian(rng, n)
    assert abs(np.imag(hs_inner(a, b))) <= 1e-12


@given(seeds, dims)
def test_entropy_unitary_invariance(seed, n):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, n)
    u = expm(-1j * random_hermitian(rng, n))
    assert abs(von_neumann_entropy(rho) - von_neumann_entropy(u @ rho @ dagger(u))) <= 1e-10


@given(seeds, dims, st.booleans())
def test_linear_entropy_zero_iff_pure(seed, n, pure):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, n, rank=1 if pure else n)
    idempotent = np.linalg.norm(rho @ rho - rho) <= 1e-10
    assert idempotent == (linear_entropy(rho) <= 1e-10)


@given(seeds, dims)
def test_superoperators_match_matrix_action(seed, n):
    rng = np.random.default_rng(seed)
    h, x = random_hermitian(rng, n), random_hermitian(rng, n)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    vec = x.reshape(-1)
    assert np.allclose((commutator_superop(h) @ vec).reshape(n, n), commutator(h, x))
    expect = 2 * a @ x @ dagger(a) - anticommutator(dagger(a) @ a, x)
    assert np.allclose((lindblad_superop(a) @ vec).reshape(n, n), expect)
    assert is_hermitian(expect)
