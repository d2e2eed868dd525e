"""Spin-chain Hamiltonians together with their block splittings.

All chains use open boundaries and spin-1/2 operators S = sigma / 2 (the
two-level model is the exception: it is written directly in Pauli matrices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import pauli_string, pauli_term
from .validation import check_qubit_count

Term = tuple[float, str]


def paulis_commute(p: str, q: str) -> bool:
    """Two Pauli strings commute iff they anticommute on an even number of sites."""
    clashes = sum(1 for a, b in zip(p, q) if a != "I" and b != "I" and a != b)
    return clashes % 2 == 0


def terms_to_matrix(terms: list[Term], n_qubits: int) -> np.ndarray:
    dim = 2**n_qubits
    M = np.zeros((dim, dim), dtype=complex)
    for coef, label in terms:
        if coef != 0.0:
            M += coef * pauli_string(label)
    return M


@dataclass(frozen=True)
class HamiltonianSplit:
    """A Hamiltonian H and an ordered list of blocks with H = sum(blocks).

    ``terms`` keeps the Pauli decomposition of every block; each block's terms
    mutually commute so the block exponential factorises into parallel gates.
    """

    family: str
    n_qubits: int
    H: np.ndarray
    blocks: dict[str, np.ndarray]
    terms: dict[str, list[Term]]
    couplings: dict[str, float] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def block_names(self) -> list[str]:
        return list(self.blocks)

    def block(self, name: str) -> np.ndarray:
        try:
            return self.blocks[name]
        except KeyError:
            raise KeyError(f"split has no block {name!r}; blocks are {self.block_names}") from None

    def reordered(self, order) -> "HamiltonianSplit":
        order = list(order)
        if sorted(order) != sorted(self.block_names):
            raise ValueError(f"order {order} is not a permutation of {self.block_names}")
        return HamiltonianSplit(
            self.family,
            self.n_qubits,
            self.H,
            {k: self.blocks[k] for k in order},
            {k: self.terms[k] for k in order},
            dict(self.couplings),
        )

    def merged(self, names, new_name: str) -> "HamiltonianSplit":
        """Split in which the blocks ``names`` are summed into one block ``new_name``."""
        names = list(names)
        blocks: dict[str, np.ndarray] = {}
        terms: dict[str, list[Term]] = {}
        for k in self.block_names:
            if k in names:
                if new_name not in blocks:
                    blocks[new_name] = sum(self.blocks[m] for m in names)
                    terms[new_name] = [t for m in names for t in self.terms[m]]
            else:
                blocks[k] = self.blocks[k]
                terms[k] = self.terms[k]
        return HamiltonianSplit(self.family, self.n_qubits, self.H, blocks, terms, dict(self.couplings))


def _make_split(family: str, n: int, terms: dict[str, list[Term]], couplings: dict) -> HamiltonianSplit:
    for name, tl in terms.items():
        labels = [lab for c, lab in tl if c != 0.0]
        for i, p in enumerate(labels):
            for q in labels[i + 1:]:
                if not paulis_commute(p, q):
                    raise ValueError(f"block {name}: terms {p} and {q} do not commute")
    blocks = {name: terms_to_matrix(tl, n) for name, tl in terms.items()}
    H = sum(blocks.values())
    return HamiltonianSplit(family, n, H, blocks, terms, couplings)


def build_two_level(h_x: float, h_z: float) -> HamiltonianSplit:
    """H = h_x sigma_x + h_z sigma_z with A = h_x sigma_x and B = h_z sigma_z."""
    if h_x == 0 and h_z == 0:
        raise ValueError("two-level model needs (h_x, h_z) != (0, 0)")
    terms = {"A": [(float(h_x), "X")], "B": [(float(h_z), "Z")]}
    return _make_split("two_level", 1, terms, {"h_x": float(h_x), "h_z": float(h_z)})


def build_qim(J: float, h_x: float, h_z: float, n_qubits: int) -> HamiltonianSplit:
    """Quantum Ising chain, A = transverse field, B = ZZ bonds + longitudinal field."""
    n = check_qubit_count(n_qubits, minimum=2)
    a = [(h_x / 2, pauli_term({j: "x"}, n)) for j in range(1, n + 1)]
    b = [(J / 4, pauli_term({j: "z", j + 1: "z"}, n)) for j in range(1, n)]
    b += [(h_z / 2, pauli_term({j: "z"}, n)) for j in range(1, n + 1)]
    return _make_split("qim", n, {"A": a, "B": b}, {"J": float(J), "h_x": float(h_x), "h_z": float(h_z)})


def _bond_terms(j: int, k: int, n: int, coef: float, delta: float, axes=("x", "y", "z")) -> list[Term]:
    weights = {"x": 1.0, "y": 1.0, "z": delta}
    return [(coef / 4 * weights[a], pauli_term({j: a, k: a}, n)) for a in axes]


def build_xxz_nn(J1: float, delta1: float, n_qubits: int) -> HamiltonianSplit:
    """Nearest-neighbour XXZ chain with the even/odd bond splitting.

    A collects bonds (j, j+1) with even 1-based j, B those with odd j.
    """
    n = check_qubit_count(n_qubits, minimum=3)
    a = [t for j in range(2, n, 2) for t in _bond_terms(j, j + 1, n, J1, delta1)]
    b = [t for j in range(1, n, 2) for t in _bond_terms(j, j + 1, n, J1, delta1)]
    return _make_split("xxz_nn", n, {"A": a, "B": b}, {"J1": float(J1), "delta1": float(delta1)})


def build_xxz_nnn(J1: float, J2: float, delta1: float, delta2: float, n_qubits: int) -> HamiltonianSplit:
    """XXZ chain with next-nearest-neighbour couplings split by axis: A = XX, B = YY, C = ZZ."""
    n = check_qubit_count(n_qubits, minimum=3)
    blocks: dict[str, list[Term]] = {}
    for name, axis in (("A", "x"), ("B", "y"), ("C", "z")):
        tl = [t for j in range(1, n) for t in _bond_terms(j, j + 1, n, J1, delta1, (axis,))]
        tl += [t for j in range(1, n - 1) for t in _bond_terms(j, j + 2, n, J2, delta2, (axis,))]
        blocks[name] = tl
    couplings = {"J1": float(J1), "J2": float(J2), "delta1": float(delta1), "delta2": float(delta2)}
    return _make_split("xxz_nnn", n, blocks, couplings)


def exact_two_level_propagator(h_x: float, h_z: float, t: float) -> np.ndarray:
    """Closed form cos(Omega t) - (i / Omega) sin(Omega t) H with Omega = sqrt(h_x^2 + h_z^2)."""
    omega = math.hypot(h_x, h_z)
    if omega == 0.0:
        raise ValueError("two-level propagator undefined for Omega = 0")
    H = np.array([[h_z, h_x], [h_x, -h_z]], dtype=complex)
    return math.cos(omega * t) * np.eye(2) - 1j * math.sin(omega * t) / omega * H


# -- states and observables ---------------------------------------------------


def all_up_state(n_qubits: int) -> np.ndarray:
    n = check_qubit_count(n_qubits)
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    return psi


def sz_diagonal(n_qubits: int) -> np.ndarray:
    """Diagonal of the total S^z operator in the computational basis."""
    n = check_qubit_count(n_qubits)
    idx = np.arange(2**n)
    up = np.zeros(2**n)
    for k in range(n):
        bit = (idx >> (n - 1 - k)) & 1
        up += 0.5 - bit
    return up


def total_sz(n_qubits: int) -> np.ndarray:
    return np.diag(sz_diagonal(n_qubits)).astype(complex)


def magnetization(psi: np.ndarray, n_qubits: int | None = None) -> float:
    """(1/N) sum_j <psi|S_j^z|psi>."""
    psi = np.asarray(psi)
    n = n_qubits if n_qubits is not None else int(math.log2(psi.shape[0]))
    return float(np.real(np.vdot(psi, sz_diagonal(n) * psi))) / n


def spin_flip(n_qubits: int) -> np.ndarray:
    return pauli_string("X" * check_qubit_count(n_qubits))
