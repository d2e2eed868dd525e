"""Cubic-order approximate variational parameters from closed-form traces.

Each parameter is expanded as c_j(t) = c_j'(0) t + c_j'''(0) t^3 / 6; the
quadratic term vanishes identically.  The coefficients depend on the blocks
only through a handful of traces, which are available in closed form for the
Ising and XXZ chains, so no matrix has to be built for those models.

Role convention: in a ``TraceRecord`` the block called ``a`` is the *first*
factor of a two-exponential ansatz and the *outer* factor of a palindromic
three-exponential ansatz.  For the Ising chain the closed forms are written
with ``a`` = ZZ bonds + longitudinal field and ``b`` = transverse field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .models import HamiltonianSplit
from .operators import trace_product
from .validation import check_qubit_count

CHI_RTOL = 1e-12


@dataclass(frozen=True)
class TraceRecord:
    """Real traces of products of two (optionally three) Hermitian blocks."""

    a2: float
    b2: float
    ab: float
    a2b2: float
    abab: float
    c2: float | None = None
    ac: float | None = None
    bc: float | None = None
    a2c2: float | None = None
    b2c2: float | None = None
    a2bc: float | None = None
    a2cb: float | None = None
    acac: float | None = None
    bcbc: float | None = None
    abac: float | None = None

    def __post_init__(self):
        for name in ("a2", "b2", "c2"):
            v = getattr(self, name)
            if v is not None and v < -1e-12 * (1.0 + abs(v)):
                raise ValueError(f"Tr[{name[0].upper()}^2] must be non-negative, got {v}")

    @property
    def has_third_block(self) -> bool:
        return self.c2 is not None

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    def swapped(self) -> "TraceRecord":
        """Two-block record with the roles of A and B exchanged (cyclic invariance of the trace)."""
        return TraceRecord(self.b2, self.a2, self.ab, self.a2b2, self.abab)

    def merged_bc(self) -> "TraceRecord":
        """Two-block record for (A, B + C)."""
        self._require_three()
        return TraceRecord(
            a2=self.a2,
            b2=self.b2 + self.c2 + 2.0 * self.bc,
            ab=self.ab + self.ac,
            a2b2=self.a2b2 + self.a2c2 + self.a2bc + self.a2cb,
            abab=self.abab + self.acac + 2.0 * self.abac,
        )

    def sub_bc(self) -> "TraceRecord":
        """Two-block record for (B, C)."""
        self._require_three()
        return TraceRecord(self.b2, self.c2, self.bc, self.b2c2, self.bcbc)

    def _require_three(self):
        if not self.has_third_block:
            raise ValueError("operation needs a three-block trace record")


def dense_traces(A, B, C=None) -> TraceRecord:
    """Brute-force traces of the given dense blocks."""

    def tr(*m) -> float:
        return float(np.real(trace_product(*m)))

    rec = TraceRecord(tr(A, A), tr(B, B), tr(A, B), tr(A, A, B, B), tr(A, B, A, B))
    if C is None:
        return rec
    return replace(
        rec,
        c2=tr(C, C),
        ac=tr(A, C),
        bc=tr(B, C),
        a2c2=tr(A, A, C, C),
        b2c2=tr(B, B, C, C),
        a2bc=tr(A, A, B, C),
        a2cb=tr(A, A, C, B),
        acac=tr(A, C, A, C),
        bcbc=tr(B, C, B, C),
        abac=tr(A, B, A, C),
    )


# -- closed forms -------------------------------------------------------------


def ising_closed_traces(J: float, h_x: float, h_z: float, n_qubits: int) -> TraceRecord:
    """Ising traces with a = ZZ bonds + z-field and b = x-field."""
    n = check_qubit_count(n_qubits, minimum=2, maximum=None)
    D = 2.0**n
    a2 = (n - 1) * D * J**2 / 16 + n * D * h_z**2 / 4
    b2 = n * D * h_x**2 / 4
    a2b2 = n * D * h_x**2 / 4 * ((n - 1) * J**2 / 16 + n * h_z**2 / 4)
    abab = D * h_x**2 / 4 * (J**2 / 16 * (n - 1) * (n - 4) + h_z**2 / 4 * n * (n - 2))
    return TraceRecord(a2, b2, 0.0, a2b2, abab)


def xxz_nn_closed_traces(J1: float, delta1: float, n_qubits: int) -> TraceRecord:
    """XXZ traces with a = bonds starting on even sites, b = bonds starting on odd sites."""
    n = check_qubit_count(n_qubits, minimum=3, maximum=None)
    D = 2.0**n
    n_even = (n - 1) // 2
    n_odd = n - 1 - n_even
    unit = J1**2 * D * (2 + delta1**2) / 16
    quartic = (J1 / 4) ** 4 * (2 + delta1**2) ** 2 * D * n_even * n_odd
    abab = quartic - 4 * (J1 / 4) ** 4 * (1 + 2 * delta1**2) * D * (n - 2)
    return TraceRecord(unit * n_even, unit * n_odd, 0.0, quartic, abab)


def xxz_nnn_closed_traces(J1: float, J2: float, delta1: float, delta2: float, n_qubits: int) -> TraceRecord:
    """Three-block traces with a = XX, b = YY, c = ZZ couplings (nearest and next-nearest)."""
    n = check_qubit_count(n_qubits, minimum=3, maximum=None)
    D = 2.0**n
    s = J1**2 * (n - 1) + J2**2 * (n - 2)
    sz = delta1**2 * J1**2 * (n - 1) + delta2**2 * J2**2 * (n - 2)
    tail = 1 if n == 3 else n * n - 8 * n + 20
    mixed = n * n - 11 * n + 22
    pre = 2.0 ** (n - 8)
    a2bc = -((J1 / 4) ** 2) * (J2 / 4) * (delta2 * J2 / 2 + delta1 * J1) * D * (n - 2)
    acac = pre * (
        delta1**2 * J1**4 * (n - 3) ** 2
        + (delta1**2 + delta2**2) * J1**2 * J2**2 * mixed
        + delta2**2 * J2**4 * tail
    )
    return TraceRecord(
        a2=D / 16 * s,
        b2=D / 16 * s,
        ab=0.0,
        a2b2=pre * s * s,
        abab=pre * (J1**4 * (n - 3) ** 2 + 2 * J1**2 * J2**2 * mixed + J2**4 * tail),
        c2=D / 16 * sz,
        ac=0.0,
        bc=0.0,
        a2c2=pre * sz * s,
        b2c2=pre * sz * s,
        a2bc=a2bc,
        a2cb=a2bc,
        acac=acac,
        bcbc=acac,
        abac=2.0 ** (n - 7) * (n - 2) * J1**2 * J2 * (2 * delta1 * J1 + delta2 * J2),
    )


def split_traces(split: HamiltonianSplit, roles, *, dense: bool = False) -> TraceRecord:
    """Trace record for ``split`` with the named blocks in the roles (a, b[, c]).

    Closed forms are used for the known families unless ``dense`` is set;
    other splits fall back to dense traces.
    """
    roles = tuple(roles)
    for r in roles:
        split.block(r)
    if len(set(roles)) != len(roles) or len(roles) not in (2, 3):
        raise ValueError(f"roles must name 2 or 3 distinct blocks, got {roles}")
    cp = split.couplings
    if not dense:
        if split.family == "qim" and len(roles) == 2:
            rec = ising_closed_traces(cp["J"], cp["h_x"], cp["h_z"], split.n_qubits)
            # closed form uses a = ZZ+Z (our block "B") and b = x-field (our "A")
            return rec if roles == ("B", "A") else rec.swapped()
        if split.family == "xxz_nn" and len(roles) == 2:
            rec = xxz_nn_closed_traces(cp["J1"], cp["delta1"], split.n_qubits)
            return rec if roles == ("A", "B") else rec.swapped()
        if split.family == "xxz_nnn" and roles == ("A", "B", "C"):
            return xxz_nnn_closed_traces(cp["J1"], cp["J2"], cp["delta1"], cp["delta2"], split.n_qubits)
    return dense_traces(*(split.blocks[r] for r in roles))


# -- cubic parameters ---------------------------------------------------------


def chi_factor(traces: TraceRecord) -> float:
    """(Tr[A^2 B^2] - Tr[(AB)^2]) / (Tr[A^2] Tr[B^2] - Tr[AB]^2)."""
    den = traces.a2 * traces.b2 - traces.ab**2
    if den <= CHI_RTOL * traces.a2 * traces.b2 or den <= 0.0:
        raise ValueError("chi undefined: blocks are proportional (Gram determinant vanishes)")
    return (traces.a2b2 - traces.abab) / den


@dataclass(frozen=True)
class CubicParams:
    """c_j(t) = linear[j] * t + cubic[j] * t^3 / 6 for every free slot."""

    linear: tuple[float, ...]
    cubic: tuple[float, ...]

    def evaluate(self, t) -> np.ndarray:
        """Parameter vector at scalar ``t``, or array of shape (len(t), m) for an array."""
        t = np.asarray(t, dtype=float)
        lin = np.asarray(self.linear)
        cub = np.asarray(self.cubic)
        if t.ndim == 0:
            return lin * t + cub * t**3 / 6.0
        return np.outer(t, lin) + np.outer(t**3, cub) / 6.0

    def __len__(self) -> int:
        return len(self.linear)


def cubic_2exp(traces: TraceRecord, lagrangian: str = "l1") -> CubicParams:
    """Slots of exp(i c0 A) exp(i c1 B)."""
    chi = chi_factor(traces)
    lag = lagrangian.lower()
    if lag == "l1":
        cubic = (-2.0 * chi * traces.ab, 2.0 * chi * traces.a2)
    elif lag == "l2":
        cubic = (-2.0 * chi * (traces.b2 + traces.ab), 2.0 * chi * (traces.a2 + traces.ab))
    else:
        raise ValueError(f"unknown lagrangian {lagrangian!r}")
    return CubicParams((-1.0, -1.0), cubic)


def cubic_3exp(traces: TraceRecord) -> CubicParams:
    """Slots (outer, middle) of exp(i c0 A) exp(i c1 B) exp(i c0 A); identical for both Lagrangians."""
    chi = chi_factor(traces)
    outer = -chi * (traces.b2 + 0.5 * traces.ab) / 2.0
    middle = chi * (traces.ab + 0.5 * traces.a2)
    return CubicParams((-0.5, -1.0), (outer, middle))


def three_block_two_step_params(traces: TraceRecord, t: float) -> np.ndarray:
    """Six parameters of the two-step split A / (B + C) at time ``t``.

    c0 = c2 multiply A, c1 multiplies B + C in the first stage.  The first-stage
    factor exp(i c1 (B + C)) is then replaced by exp(i c3 B) exp(i c4 C) exp(i c5 B)
    whose parameters follow the three-exponential cubic form at effective time -c1.
    """
    outer = cubic_3exp(traces.merged_bc())
    inner = cubic_3exp(traces.sub_bc())
    c0, c1 = outer.evaluate(t)
    s = -c1
    c3, c4 = inner.evaluate(s)
    return np.array([c0, c1, c0, c3, c4, c3])


def three_block_ansatz_params(traces: TraceRecord, t: float) -> np.ndarray:
    """Parameters (c0, c3, c4, c5, c2) for the five-factor product A B C B A of the two-step split."""
    c = three_block_two_step_params(traces, t)
    return np.array([c[0], c[3], c[4], c[5], c[2]])


def ratio_denominators(n_qubits: int) -> tuple[int, int]:
    """(floor((N-1)/2), ceil((N-1)/2)): numbers of even- and odd-start bonds."""
    n = check_qubit_count(n_qubits, minimum=3, maximum=None)
    return (n - 1) // 2, math.ceil((n - 1) / 2)
