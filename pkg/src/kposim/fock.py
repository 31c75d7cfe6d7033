"""Dense linear algebra on a truncated single-mode Fock space.

Operators and states are plain complex numpy arrays; a "dim" is the number of
retained Fock levels |0>, ..., |dim-1>.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import DimensionMismatch, NotHermitian, ToleranceFailure, TruncationError

# Poisson tail mass allowed beyond the truncation edge for a coherent state.
COHERENT_TAIL_TOL = 1e-8


def check_dim(dim: int) -> int:
    if int(dim) != dim or dim < 2:
        raise DimensionMismatch(f"Fock dimension must be an integer >= 2, got {dim!r}")
    return int(dim)


def annihilation(dim: int) -> np.ndarray:
    """Matrix of ``a`` with <m|a|n> = sqrt(n) delta_{m,n-1}."""
    dim = check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).conj().T


def number(dim: int) -> np.ndarray:
    dim = check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def identity(dim: int) -> np.ndarray:
    return np.eye(check_dim(dim), dtype=complex)


def parity_operator(dim: int) -> np.ndarray:
    """Diagonal photon-number parity (-1)^n."""
    dim = check_dim(dim)
    return np.diag((-1.0) ** np.arange(dim)).astype(complex)


def x_quadrature(dim: int) -> np.ndarray:
    """(a + a^dag)/2, the bit-discriminating observable."""
    a = annihilation(dim)
    return (a + a.conj().T) / 2


def fock_state(dim: int, n: int) -> np.ndarray:
    dim = check_dim(dim)
    if not 0 <= n < dim:
        raise TruncationError(f"Fock level {n} outside truncated space of dim {dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def coherent_tail_mass(dim: int, alpha: complex) -> float:
    """Probability that a Poisson(|alpha|^2) photon count is >= dim."""
    mean = abs(alpha) ** 2
    if mean == 0:
        return 0.0
    # P(N >= dim) equals the regularized lower incomplete gamma P(dim, mean)
    return float(gammainc(dim, mean))


def coherent_state(dim: int, alpha: complex) -> np.ndarray:
    """Normalized truncated coherent state |alpha>.

    Raises TruncationError when |alpha|^2 > dim/4 or when more than
    ``COHERENT_TAIL_TOL`` of the ideal state would fall outside the space.
    """
    dim = check_dim(dim)
    alpha = complex(alpha)
    mean = abs(alpha) ** 2
    tail = coherent_tail_mass(dim, alpha)
    if mean > dim / 4 or tail > COHERENT_TAIL_TOL:
        raise TruncationError(
            f"coherent state |alpha|^2={mean:.4g} does not fit in dim={dim} "
            f"(needs |alpha|^2 <= dim/4 and tail mass {tail:.2e} <= {COHERENT_TAIL_TOL:g})"
        )
    if alpha == 0:
        return fock_state(dim, 0)
    n = np.arange(dim)
    # log-space coefficients avoid factorial overflow
    log_mag = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    log_mag -= log_mag.max()
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    return amps / np.linalg.norm(amps)


def cat_state(dim: int, alpha: complex, sign: int = 1) -> np.ndarray:
    """Normalized (|alpha> + sign |-alpha>)."""
    v = coherent_state(dim, alpha) + sign * coherent_state(dim, -alpha)
    return v / np.linalg.norm(v)


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def as_density(state: np.ndarray) -> np.ndarray:
    """Accept a ket or a density matrix and return a density matrix."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return ket_to_dm(state / np.linalg.norm(state))
    if state.ndim == 2 and state.shape[0] == state.shape[1]:
        return state
    raise DimensionMismatch(f"not a ket or square density matrix: shape {state.shape}")


def expect(op: np.ndarray, rho: np.ndarray) -> complex:
    """Tr[rho op]."""
    return complex(np.einsum("ij,ji->", rho, op))


def hermiticity_error(m: np.ndarray) -> float:
    """Relative Frobenius deviation ||M - M^dag|| / ||M|| (0 for the zero matrix)."""
    norm = np.linalg.norm(m)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(m - m.conj().T) / norm)


def require_hermitian(m: np.ndarray, tol: float = 1e-12) -> None:
    err = hermiticity_error(m)
    if err > tol:
        raise NotHermitian(f"matrix deviates from Hermitian by {err:.3e} (relative)")


def commutator(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x @ y - y @ x


def density_diagnostics(rho: np.ndarray) -> dict:
    """Trace error, Hermiticity deviation and smallest eigenvalue of rho."""
    herm = float(np.linalg.norm(rho - rho.conj().T))
    evals = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    return {
        "trace_error": abs(complex(np.trace(rho)) - 1.0),
        "hermiticity": herm,
        "min_eigenvalue": float(evals[0]),
    }


def check_density(
    rho: np.ndarray,
    trace_tol: float = 1e-8,
    herm_tol: float = 1e-10,
    neg_tol: float = -1e-6,
) -> dict:
    """Validate density-matrix invariants; raise ToleranceFailure on violation."""
    diag = density_diagnostics(rho)
    if diag["trace_error"] > trace_tol:
        raise ToleranceFailure(f"trace drifted by {diag['trace_error']:.3e}")
    if diag["hermiticity"] > herm_tol:
        raise ToleranceFailure(f"density matrix not Hermitian ({diag['hermiticity']:.3e})")
    if diag["min_eigenvalue"] < neg_tol:
        raise ToleranceFailure(f"density matrix eigenvalue {diag['min_eigenvalue']:.3e} below {neg_tol:g}")
    return diag
