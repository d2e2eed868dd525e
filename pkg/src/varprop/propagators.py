"""Exact evolution and fixed-coefficient product formulas."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import HamiltonianSplit
from .operators import matexp_hermitian, polar_unitary
from .validation import check_hermitian, check_unitary

RUTH_P = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
RUTH_Q = 1.0 - 2.0 * RUTH_P


@dataclass(frozen=True)
class SplitFormula:
    """Ordered factors exp(-i * coef * t * block) referring to block positions.

    ``factors`` holds (block_index, coef) pairs; the index points into the
    split's stored block order so the same formula serves any labelling.
    """

    name: str
    n_blocks: int
    factors: tuple[tuple[int, float], ...]

    def coefficient_sums(self) -> list[float]:
        sums = [0.0] * self.n_blocks
        for idx, coef in self.factors:
            sums[idx] += coef
        return sums

    def pattern(self, names) -> str:
        return "".join(names[idx] for idx, _ in self.factors)


TS1 = SplitFormula("ts1", 2, ((0, 1.0), (1, 1.0)))
TS2 = SplitFormula("ts2", 2, ((0, 0.5), (1, 1.0), (0, 0.5)))
# three TS2 steps of weights p, q, p with adjacent outer factors merged: 7 exponentials
RUTH4 = SplitFormula(
    "ruth4",
    2,
    (
        (0, RUTH_P / 2),
        (1, RUTH_P),
        (0, (RUTH_P + RUTH_Q) / 2),
        (1, RUTH_Q),
        (0, (RUTH_Q + RUTH_P) / 2),
        (1, RUTH_P),
        (0, RUTH_P / 2),
    ),
)
# U_BC(t) exp(-itA) U_BC(t) with U_BC = C(t/4) B(t/2) C(t/4); blocks stored as (A, B, C)
TS7_ABC = SplitFormula(
    "ts7",
    3,
    ((2, 0.25), (1, 0.5), (2, 0.25), (0, 1.0), (2, 0.25), (1, 0.5), (2, 0.25)),
)

FORMULAS = {f.name: f for f in (TS1, TS2, RUTH4, TS7_ABC)}


def exact_propagator(H, t: float) -> np.ndarray:
    """exp(-i H t)."""
    return matexp_hermitian(H, -t)


def apply_formula(split: HamiltonianSplit, formula: SplitFormula, t: float) -> np.ndarray:
    if len(split.blocks) != formula.n_blocks:
        raise ValueError(f"{formula.name} needs {formula.n_blocks} blocks, split has {len(split.blocks)}")
    blocks = list(split.blocks.values())
    U = np.eye(split.dim, dtype=complex)
    for idx, coef in formula.factors:
        U = U @ matexp_hermitian(blocks[idx], -coef * t, check=False)
    return U


def ts1(split: HamiltonianSplit, t: float) -> np.ndarray:
    return apply_formula(split, TS1, t)


def ts2(split: HamiltonianSplit, t: float) -> np.ndarray:
    return apply_formula(split, TS2, t)


def ruth4(split: HamiltonianSplit, t: float) -> np.ndarray:
    return apply_formula(split, RUTH4, t)


def ts7_abc(split: HamiltonianSplit, t: float) -> np.ndarray:
    return apply_formula(split, TS7_ABC, t)


def repeat_stroboscopic(U_step, t_total: float, tau: float, reunitarize_every: int = 50):
    """Return (U_step**n, n) with n = floor(t_total / tau)."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    U_step = check_unitary(U_step, "U_step")
    n = int(math.floor(t_total / tau + 1e-12))
    P = np.eye(U_step.shape[0], dtype=complex)
    for k in range(1, n + 1):
        P = U_step @ P
        if k % reunitarize_every == 0:
            P = polar_unitary(P)
    return P, n


def exact_step(H, tau: float) -> np.ndarray:
    return exact_propagator(check_hermitian(H), tau)
