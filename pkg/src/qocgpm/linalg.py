"""Dense complex linear algebra for small quantum systems.

All functions take and return plain ``numpy`` arrays of dtype ``complex128``.
Role invariants (unitarity, density-matrix validity) are checked by the
``check_*`` helpers rather than on every arithmetic call, because
intermediate integrator stages may legitimately violate them within
tolerance.
"""

import numpy as np

IDENTITY2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def as_matrix(a):
    """Return ``a`` as a square, finite complex matrix."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def kron(a, b):
    return np.kron(as_matrix(a), as_matrix(b))


def dagger(a):
    return np.conj(np.asarray(a)).T


def commutator(a, b):
    a, b = np.asarray(a), np.asarray(b)
    _same_shape(a, b)
    return a @ b - b @ a


def anticommutator(a, b):
    a, b = np.asarray(a), np.asarray(b)
    _same_shape(a, b)
    return a @ b + b @ a


def hs_inner(a, b):
    """Hilbert-Schmidt inner product ``Tr(a^dagger b)``."""
    a, b = np.asarray(a), np.asarray(b)
    _same_shape(a, b)
    return complex(np.vdot(a, b))


def hs_dist2(a, b):
    """Squared Hilbert-Schmidt distance ``Tr((a - b)^2)`` for Hermitian inputs."""
    a, b = np.asarray(a), np.asarray(b)
    _same_shape(a, b)
    d = a - b
    return float(np.real(np.vdot(d, d)))


def is_hermitian(a, atol=1e-10):
    a = np.asarray(a)
    return bool(np.linalg.norm(a - dagger(a)) <= atol)


def is_unitary(u, atol=1e-8):
    u = np.asarray(u)
    return bool(np.linalg.norm(dagger(u) @ u - np.eye(u.shape[0])) <= atol)


def check_hermitian(a, atol=1e-10, name="matrix"):
    a = as_matrix(a)
    if not is_hermitian(a, atol):
        raise ValueError(f"{name} is not Hermitian")
    return a


def check_unitary(u, atol=1e-8, name="matrix"):
    u = as_matrix(u)
    if not is_unitary(u, atol):
        raise ValueError(f"{name} is not unitary (tolerance {atol})")
    return u


def check_density_matrix(rho, atol=1e-10, eig_tol=1e-8, name="density matrix"):
    """Validate Hermiticity, unit trace and positivity; return the array."""
    rho = check_hermitian(rho, atol, name)
    if abs(np.trace(rho) - 1.0) > atol:
        raise ValueError(f"{name} does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -eig_tol:
        raise ValueError(f"{name} has negative eigenvalues")
    return rho


def von_neumann_entropy(rho):
    """Natural-log entropy ``-Tr(rho log rho)`` with ``0 log 0 = 0``."""
    rho = check_hermitian(rho, atol=1e-8)
    w = np.linalg.eigvalsh(rho)
    w = w[w > 0.0]
    return float(-np.sum(w * np.log(w)))


def linear_entropy(rho):
    rho = check_hermitian(rho, atol=1e-8)
    return float(1.0 - np.real(np.trace(rho @ rho)))


def projector(vec):
    v = np.asarray(vec, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def basis_state(n, k):
    v = np.zeros(n, dtype=complex)
    v[k] = 1.0
    return v


# Row-major vectorisation: vec(A X B) = kron(A, B.T) vec(X).

def sandwich_superop(a, b):
    """Superoperator of ``X -> a X b`` acting on row-major ``vec(X)``."""
    return np.kron(np.asarray(a), np.asarray(b).T)


def commutator_superop(h):
    """Superoperator of ``X -> [h, X]``."""
    h = np.asarray(h)
    eye = np.eye(h.shape[0])
    return np.kron(h, eye) - np.kron(eye, h.T)


def anticommutator_superop(h):
    h = np.asarray(h)
    eye = np.eye(h.shape[0])
    return np.kron(h, eye) + np.kron(eye, h.T)


def lindblad_superop(a):
    """Superoperator of ``X -> 2 a X a^dagger - {a^dagger a, X}``."""
    a = np.asarray(a, dtype=complex)
    return 2.0 * sandwich_superop(a, dagger(a)) - anticommutator_superop(dagger(a) @ a)
