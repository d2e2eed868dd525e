"""Input validation helpers and the package's exception types."""

from __future__ import annotations

import numpy as np

MAX_QUBITS = 12
HERMITIAN_ATOL = 1e-12


class SolverError(RuntimeError):
    """Raised when a parameter trajectory cannot be integrated."""


class StepSizeUnderflowError(SolverError):
    def __init__(self, t: float, message: str = ""):
        self.t = float(t)
        super().__init__(f"step size underflow at t={t:.17g}" + (f": {message}" if message else ""))


class ImaginaryResidueError(SolverError):
    """The linear solve for the parameter velocities left a non-negligible imaginary part."""


def check_qubit_count(n_qubits, *, minimum: int = 1, maximum: int | None = MAX_QUBITS) -> int:
    """Integer qubit count in [minimum, maximum]; ``maximum=None`` lifts the dense cap."""
    n = int(n_qubits)
    if n != n_qubits:
        raise ValueError(f"qubit count must be an integer, got {n_qubits!r}")
    if n < minimum:
        raise ValueError(f"qubit count must be >= {minimum}, got {n}")
    if maximum is not None and n > maximum:
        raise ValueError(f"qubit count {n} exceeds the dense cap of {maximum}")
    return n


def check_square(X, name: str = "matrix") -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {X.shape}")
    dim = X.shape[0]
    if dim < 1 or dim & (dim - 1):
        raise ValueError(f"{name} dimension {dim} is not a power of two")
    return X


def check_hermitian(H, name: str = "H", atol: float = HERMITIAN_ATOL) -> np.ndarray:
    H = check_square(H, name)
    dev = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
    if dev >= atol:
        raise ValueError(f"{name} is not Hermitian (max |X - X^dag| = {dev:.3e})")
    return np.asarray(H, dtype=complex)


def check_unitary(U, name: str = "U", rtol: float = 1e-10) -> np.ndarray:
    U = check_square(U, name)
    dim = U.shape[0]
    dev = np.linalg.norm(U.conj().T @ U - np.eye(dim))
    if dev >= rtol * np.sqrt(dim):
        raise ValueError(f"{name} is not unitary (||U^dag U - I||_F = {dev:.3e})")
    return np.asarray(U, dtype=complex)


def check_same_shape(U, V) -> None:
    if np.shape(U) != np.shape(V):
        raise ValueError(f"dimension mismatch: {np.shape(U)} vs {np.shape(V)}")


def check_state(psi, dim: int | None = None, atol: float = 1e-12) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if dim is not None and psi.shape[0] != dim:
        raise ValueError(f"state has dimension {psi.shape[0]}, expected {dim}")
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) >= atol:
        raise ValueError(f"state is not normalised (norm = {nrm:.17g})")
    return psi
