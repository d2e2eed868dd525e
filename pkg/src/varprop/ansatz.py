"""Parameterised product ansatz U(c) = prod_f exp(i c_{slot(f)} G_f).

Derivatives are expressed through conjugated generators: with L_f the product
of the factors left of f, K_f = L_f (i G_f) L_f^dag, every first derivative is
dU/dc_j = (sum_{f in slot j} K_f) U and every second derivative is an ordered
product of two K's times U.  One evaluation therefore costs O(M) exponentials
and O(M) matrix products for M factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import HamiltonianSplit
from .operators import eigh_cached

FREE = None


@dataclass(frozen=True)
class ProductAnsatz:
    """Ordered factors binding blocks of ``split`` to parameter slots.

    ``slots[s]`` is ``None`` for a free slot or a float for a slot fixed to that
    value.  Several factors may share one slot.  Parameter vectors passed to the
    public functions list the free slots only, in slot order.
    """

    split: HamiltonianSplit
    factors: tuple[tuple[str, int], ...]
    slots: tuple[float | None, ...]
    name: str = ""

    def __post_init__(self):
        for block, slot in self.factors:
            if block not in self.split.blocks:
                raise ValueError(f"factor references unknown block {block!r}")
            if not 0 <= slot < len(self.slots):
                raise ValueError(f"factor references unknown slot {slot}")
        used = {s for _, s in self.factors}
        for s in range(len(self.slots)):
            if s not in used:
                raise ValueError(f"slot {s} is not bound to any factor")

    @classmethod
    def from_pattern(cls, split: HamiltonianSplit, pattern: str, name: str | None = None) -> "ProductAnsatz":
        """One free slot per letter, e.g. ``"BAB"`` -> exp(ic0 B) exp(ic1 A) exp(ic2 B)."""
        pattern = pattern.strip()
        if not pattern:
            raise ValueError("empty ansatz pattern")
        factors = tuple((ch, k) for k, ch in enumerate(pattern))
        return cls(split, factors, (FREE,) * len(pattern), name or pattern)

    @classmethod
    def palindromic(cls, split: HamiltonianSplit, pattern: str, name: str | None = None) -> "ProductAnsatz":
        """Mirror-image factors share a slot, e.g. ``"BAB"`` -> exp(ic0 B) exp(ic1 A) exp(ic0 B)."""
        pattern = pattern.strip()
        if not pattern or pattern != pattern[::-1]:
            raise ValueError(f"pattern {pattern!r} is not a palindrome")
        n = len(pattern)
        factors = tuple((ch, min(k, n - 1 - k)) for k, ch in enumerate(pattern))
        return cls(split, factors, (FREE,) * ((n + 1) // 2), name or f"{pattern}*")

    @property
    def pattern(self) -> str:
        return "".join(b for b, _ in self.factors)

    @property
    def free_slots(self) -> list[int]:
        return [s for s, v in enumerate(self.slots) if v is FREE]

    @property
    def n_params(self) -> int:
        return len(self.free_slots)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    def slot_values(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float).reshape(-1)
        if c.shape[0] != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {c.shape[0]}")
        full = np.array([0.0 if v is FREE else float(v) for v in self.slots])
        full[self.free_slots] = c
        return full

    def ts_coefficients(self) -> np.ndarray:
        """Minimum-norm linear start: each block's -1 is shared equally among its free factors.

        A slot bound to several factors carries the per-factor value once.
        """
        counts: dict[str, int] = {}
        for block, slot in self.factors:
            if self.slots[slot] is FREE:
                counts[block] = counts.get(block, 0) + 1
        out = np.zeros(self.n_params)
        pos = {s: i for i, s in enumerate(self.free_slots)}
        for block, slot in self.factors:
            if slot in pos:
                out[pos[slot]] = -1.0 / counts[block]
        return out


@dataclass
class Tangent:
    """U(c) together with the conjugated generators of every factor and slot."""

    U: np.ndarray
    K: np.ndarray  # (M, d, d) per-factor conjugated generators
    Y: np.ndarray  # (m, d, d) per-free-slot sums of K
    factor_param: np.ndarray  # index into free params for each factor, -1 if fixed


def factor_exponential(G: np.ndarray, theta: float) -> np.ndarray:
    evals, evecs = eigh_cached(G)
    return (evecs * np.exp(1j * theta * evals)) @ evecs.conj().T


def tangent(ansatz: ProductAnsatz, c) -> Tangent:
    full = ansatz.slot_values(c)
    split = ansatz.split
    d = split.dim
    pos = {s: i for i, s in enumerate(ansatz.free_slots)}
    M = ansatz.n_factors
    K = np.empty((M, d, d), dtype=complex)
    fp = np.full(M, -1)
    L = np.eye(d, dtype=complex)
    for f, (block, slot) in enumerate(ansatz.factors):
        G = split.blocks[block]
        K[f] = 1j * (L @ G @ L.conj().T)
        fp[f] = pos.get(slot, -1)
        L = L @ factor_exponential(G, full[slot])
    Y = np.zeros((ansatz.n_params, d, d), dtype=complex)
    for f in range(M):
        if fp[f] >= 0:
            Y[fp[f]] += K[f]
    return Tangent(L, K, Y, fp)


def assemble_unitary(ansatz: ProductAnsatz, c) -> np.ndarray:
    full = ansatz.slot_values(c)
    U = np.eye(ansatz.split.dim, dtype=complex)
    for block, slot in ansatz.factors:
        U = U @ factor_exponential(ansatz.split.blocks[block], full[slot])
    return U


def parameter_derivatives(ansatz: ProductAnsatz, c) -> np.ndarray:
    """Array of dU/dc_j, shape (m, d, d)."""
    tg = tangent(ansatz, c)
    return tg.Y @ tg.U


def second_derivative_generators(tg: Tangent) -> np.ndarray:
    """S[l, k] with d^2 U / dc_l dc_k = S[l, k] U (factor order respected)."""
    m = tg.Y.shape[0]
    d = tg.U.shape[0]
    S = np.zeros((m, m, d, d), dtype=complex)
    M = tg.K.shape[0]
    for f in range(M):
        l = tg.factor_param[f]
        if l < 0:
            continue
        S[l, l] += tg.K[f] @ tg.K[f]
        for f2 in range(f + 1, M):
            k = tg.factor_param[f2]
            if k < 0:
                continue
            prod = tg.K[f] @ tg.K[f2]
            S[l, k] += prod
            if k != l:
                S[k, l] += prod
            else:
                S[l, l] += prod
    return S


def acceleration_generator(tg: Tangent, cdot) -> np.ndarray:
    """Q with sum_{lk} cdot_l cdot_k d^2U/dc_l dc_k = Q U."""
    cdot = np.asarray(cdot, dtype=float)
    M = tg.K.shape[0]
    d = tg.U.shape[0]
    kappa = [tg.K[f] * cdot[tg.factor_param[f]] if tg.factor_param[f] >= 0 else None for f in range(M)]
    Q = np.zeros((d, d), dtype=complex)
    suffix = np.zeros((d, d), dtype=complex)
    for f in range(M - 1, -1, -1):
        if kappa[f] is None:
            continue
        Q += kappa[f] @ (kappa[f] + 2.0 * suffix)
        suffix = suffix + kappa[f]
    return Q
