"""Dense operator algebra on N-qubit Hilbert spaces.

Basis convention: computational basis index bit k (k = 0 most significant)
belongs to site k + 1, and spin-up is bit value 0.  Site 1 is therefore the
leftmost tensor factor.
"""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from functools import reduce

import numpy as np

from .validation import check_hermitian, check_qubit_count, check_same_shape, check_unitary

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_all(mats) -> np.ndarray:
    return reduce(np.kron, mats)


def pauli_site_operator(axis: str, site: int, n_qubits: int) -> np.ndarray:
    """Pauli matrix ``axis`` acting on ``site`` (1-based) of an ``n_qubits`` chain."""
    n = check_qubit_count(n_qubits)
    axis = axis.lower()
    if axis not in ("x", "y", "z"):
        raise ValueError(f"unknown Pauli axis {axis!r}")
    if not 1 <= site <= n:
        raise ValueError(f"site {site} out of range 1..{n}")
    return kron_all([PAULI[axis] if k == site else PAULI["i"] for k in range(1, n + 1)])


def pauli_string(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string such as ``"XIZ"`` (leftmost char = site 1)."""
    check_qubit_count(len(label))
    return kron_all([PAULI[ch.lower()] for ch in label])


def pauli_term(ops: dict[int, str], n_qubits: int) -> str:
    """Pauli-string label with ``ops`` = {site: axis} and identities elsewhere."""
    return "".join(ops.get(k, "i").upper() for k in range(1, n_qubits + 1))


def spin_operator(axis: str, site: int, n_qubits: int) -> np.ndarray:
    return 0.5 * pauli_site_operator(axis, site, n_qubits)


def dagger(X: np.ndarray) -> np.ndarray:
    return X.conj().T


def commutator(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return X @ Y - Y @ X


def trace_product(*mats) -> complex:
    """Tr[X1 X2 ... Xk]."""
    if len(mats) == 1:
        return complex(np.trace(mats[0]))
    if len(mats) == 2:
        return complex(np.einsum("ij,ji->", mats[0], mats[1]))
    return complex(np.trace(reduce(np.matmul, mats)))


# -- eigendecomposition cache --------------------------------------------------


class EigenCache:
    """Thread-safe LRU cache of Hermitian eigendecompositions keyed by content."""

    def __init__(self, maxsize: int = 256):
        self.maxsize = maxsize
        self._data: OrderedDict[bytes, tuple[np.ndarray, np.ndarray]] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(H: np.ndarray) -> bytes:
        H = np.ascontiguousarray(H, dtype=complex)
        return hashlib.sha1(repr(H.shape).encode() + H.tobytes()).digest()

    def get(self, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = self.key(H)
        with self._lock:
            hit = self._data.get(k)
            if hit is not None:
                self._data.move_to_end(k)
                self.hits += 1
                return hit
        # decompose outside the lock; concurrent inserts of the same key are idempotent
        evals, evecs = np.linalg.eigh(H)
        evals.setflags(write=False)
        evecs.setflags(write=False)
        with self._lock:
            self.misses += 1
            self._data[k] = (evals, evecs)
            self._data.move_to_end(k)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return evals, evecs

    def clear(self) -> None:
        with self._lock:
            self._data.clear()
            self.hits = self.misses = 0


EIGEN_CACHE = EigenCache()


def eigh_cached(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return EIGEN_CACHE.get(H)


def matexp_hermitian(H, theta: float, *, check: bool = True) -> np.ndarray:
    """Return exp(i * theta * H) for Hermitian ``H``."""
    if check:
        H = check_hermitian(H)
    evals, evecs = eigh_cached(np.asarray(H, dtype=complex))
    return (evecs * np.exp(1j * theta * evals)) @ evecs.conj().T


def polar_unitary(U: np.ndarray) -> np.ndarray:
    """Nearest unitary to ``U`` in Frobenius norm (polar factor)."""
    W, _, Vh = np.linalg.svd(U)
    return W @ Vh


# -- error metrics ------------------------------------------------------------


def frobenius_error(U, V) -> float:
    """||U - V||_F / (2 sqrt(D)); lies in [0, 1] for unitary arguments."""
    U = np.asarray(U)
    V = np.asarray(V)
    check_same_shape(U, V)
    dim = U.shape[0]
    return float(np.linalg.norm(U - V) / (2.0 * np.sqrt(dim)))


def strob_frobenius_error(H, U_step, tau: float, n: int) -> float:
    """Error of ``U_step**n`` against the exact propagator at time ``n * tau``."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    H = check_hermitian(H)
    U_step = check_unitary(U_step, "U_step")
    check_same_shape(H, U_step)
    exact = matexp_hermitian(H, -n * tau, check=False)
    return frobenius_error(exact, np.linalg.matrix_power(U_step, int(n)))


def strob_error_curve(H, U_step, tau: float, n_max: int, reunitarize_every: int = 50) -> np.ndarray:
    """Stroboscopic errors for n = 1..n_max, built incrementally."""
    H = check_hermitian(H)
    U_step = np.asarray(U_step, dtype=complex)
    evals, evecs = eigh_cached(H)
    out = np.empty(int(n_max))
    P = np.eye(H.shape[0], dtype=complex)
    for n in range(1, int(n_max) + 1):
        P = U_step @ P
        if n % reunitarize_every == 0:
            P = polar_unitary(P)
        exact = (evecs * np.exp(-1j * n * tau * evals)) @ evecs.conj().T
        out[n - 1] = frobenius_error(exact, P)
    return out
