"""Lowering Ising-chain product ansaetze to RX / RZ / CNOT gate programs.

Conventions: RX(theta) = exp(-i theta X / 2), RZ(theta) = exp(-i theta Z / 2),
qubit q (0-based) is chain site q + 1, the leftmost tensor factor for q = 0.
For the split A = (h_x/2) sum X_j, B = (J/4) sum Z_j Z_{j+1} + (h_z/2) sum Z_j:

* exp(i c A)  ->  RX(-c h_x) on every qubit
* exp(i c B)  ->  RZ(-c h_z) on every qubit, then for each bond
                  CNOT(j, j+1) RZ(-c J / 2) on j+1 CNOT(j, j+1)

The bond gadget reproduces exp(-i theta Z Z / 2) exactly.  Gates are listed in
application order, so the last factor of the ansatz product comes first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .ansatz import ProductAnsatz
from .operators import PAULI, kron_all
from .validation import check_qubit_count

KINDS = ("RX", "RZ", "CNOT")


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        need = 2 if self.kind == "CNOT" else 1
        if len(self.qubits) != need:
            raise ValueError(f"{self.kind} acts on {need} qubit(s), got {self.qubits}")
        if self.kind == "CNOT":
            if self.qubits[0] == self.qubits[1]:
                raise ValueError("CNOT control and target must differ")
            if self.angle is not None:
                raise ValueError("CNOT takes no angle")
        elif self.angle is None:
            raise ValueError(f"{self.kind} needs an angle")


@dataclass
class GateProgram:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    layer_starts: list[int] = field(default_factory=list)
    layer_labels: list[str] = field(default_factory=list)
    params: tuple[float, ...] = ()
    pattern: str = ""

    def __post_init__(self):
        check_qubit_count(self.n_qubits, minimum=1)
        for g in self.gates:
            if any(not 0 <= q < self.n_qubits for q in g.qubits):
                raise ValueError(f"gate {g} addresses a qubit outside 0..{self.n_qubits - 1}")


@dataclass(frozen=True)
class GateCounts:
    rx: int
    rz: int
    cnot: int
    layers: int = 1
    scope: str = "per-layer"

    def scaled(self, layers: int) -> "GateCounts":
        if self.scope != "per-layer":
            raise ValueError("only per-layer counts can be scaled")
        return GateCounts(self.rx * layers, self.rz * layers, self.cnot * layers, layers, "total")

    def as_tuple(self) -> tuple[int, int, int]:
        return self.rx, self.rz, self.cnot


def _require_qim(ansatz: ProductAnsatz):
    split = ansatz.split
    if split.family != "qim" or set(split.block_names) != {"A", "B"}:
        raise ValueError(f"circuit emission supports Ising splits only, got family {split.family!r}")


def _factor_gates(block: str, c: float, n: int, J: float, h_x: float, h_z: float) -> list[Gate]:
    if block == "A":
        return [Gate("RX", (q,), -c * h_x) for q in range(n)]
    gates = [Gate("RZ", (q,), -c * h_z) for q in range(n)]
    bonds = [j for j in range(n - 1) if j % 2 == 0] + [j for j in range(n - 1) if j % 2 == 1]
    for j in bonds:
        gates += [Gate("CNOT", (j, j + 1)), Gate("RZ", (j + 1,), -c * J / 2), Gate("CNOT", (j, j + 1))]
    return gates


def emit_qim_ansatz(ansatz: ProductAnsatz, c) -> GateProgram:
    """Gate program reproducing assemble_unitary(ansatz, c) up to a global phase."""
    _require_qim(ansatz)
    split = ansatz.split
    full = ansatz.slot_values(c)
    cp = split.couplings
    n = split.n_qubits
    prog = GateProgram(n, params=tuple(float(x) for x in np.asarray(c, dtype=float).reshape(-1)), pattern=ansatz.pattern)
    for block, slot in reversed(ansatz.factors):
        prog.layer_starts.append(len(prog.gates))
        prog.layer_labels.append(block)
        prog.gates.extend(_factor_gates(block, float(full[slot]), n, cp["J"], cp["h_x"], cp["h_z"]))
    return prog


def gate_matrix(gate: Gate, n: int) -> np.ndarray:
    if gate.kind == "CNOT":
        ctrl, targ = gate.qubits
        P0 = np.diag([1.0, 0.0]).astype(complex)
        P1 = np.diag([0.0, 1.0]).astype(complex)
        I = PAULI["i"]
        off = kron_all([P0 if q == ctrl else I for q in range(n)])
        on = kron_all([P1 if q == ctrl else (PAULI["x"] if q == targ else I) for q in range(n)])
        return off + on
    axis = PAULI["x"] if gate.kind == "RX" else PAULI["z"]
    local = np.cos(gate.angle / 2) * PAULI["i"] - 1j * np.sin(gate.angle / 2) * axis
    return kron_all([local if q == gate.qubits[0] else PAULI["i"] for q in range(n)])


def program_to_unitary(program: GateProgram) -> np.ndarray:
    """Compose the gates right to left: U = G_last ... G_1 G_0."""
    n = program.n_qubits
    U = np.eye(2**n, dtype=complex)
    for g in program.gates:
        U = gate_matrix(g, n) @ U
    return U


def phase_invariant_fidelity(U, V) -> float:
    """|Tr(U^dag V)| / D."""
    U = np.asarray(U)
    return float(abs(np.vdot(U, V)) / U.shape[0])


# -- gate counting ------------------------------------------------------------


def gate_counts(pattern: str, n_qubits: int, layers: int = 1) -> GateCounts:
    """Gate census from the per-factor rules; ``layers > 1`` returns totals."""
    n = check_qubit_count(n_qubits, minimum=2)
    rx = rz = cnot = 0
    for ch in pattern:
        if ch == "A":
            rx += n
        elif ch == "B":
            rz += 2 * n - 1
            cnot += 2 * n - 2
        else:
            raise ValueError(f"unrecognised block {ch!r} in pattern {pattern!r}")
    per_layer = GateCounts(rx, rz, cnot)
    if int(layers) < 1:
        raise ValueError(f"layers must be positive, got {layers}")
    return per_layer if layers == 1 else per_layer.scaled(int(layers))


def census(program: GateProgram) -> GateCounts:
    """Count the gates actually present in ``program``."""
    kinds = [g.kind for g in program.gates]
    return GateCounts(kinds.count("RX"), kinds.count("RZ"), kinds.count("CNOT"))


def count_reduction(ours: GateCounts, reference: GateCounts) -> dict[str, float]:
    """Percentage saved by ``ours`` relative to ``reference`` per gate kind."""
    out = {}
    for kind, a, b in zip(("rx", "rz", "cnot"), ours.as_tuple(), reference.as_tuple()):
        out[kind] = 100.0 * (1.0 - a / b) if b else 0.0
    return out


# -- text format --------------------------------------------------------------

_LINE = re.compile(r"^(rx|rz)\((?P<angle>[^)]+)\)\s+q\[(?P<q>\d+)\];$|^cx\s+q\[(?P<c>\d+)\],q\[(?P<t>\d+)\];$")


def export_text(program: GateProgram) -> str:
    """One gate per line, angles with 17 significant digits, ``//`` header lines."""
    lines = [
        "// varprop gate program",
        f"// N = {program.n_qubits}",
        f"// pattern = {program.pattern}",
        "// params = " + ",".join(f"{p:.17g}" for p in program.params),
    ]
    for g in program.gates:
        if g.kind == "CNOT":
            lines.append(f"cx q[{g.qubits[0]}],q[{g.qubits[1]}];")
        else:
            lines.append(f"{g.kind.lower()}({g.angle:.17g}) q[{g.qubits[0]}];")
    return "\n".join(lines) + "\n"


def parse_text(text: str) -> GateProgram:
    """Inverse of export_text (layer boundaries are not stored in the text)."""
    n = None
    pattern = ""
    params: tuple[float, ...] = ()
    gates: list[Gate] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("//"):
            key, _, value = line[2:].partition("=")
            key, value = key.strip(), value.strip()
            if key == "N":
                n = int(value)
            elif key == "pattern":
                pattern = value
            elif key == "params" and value:
                params = tuple(float(v) for v in value.split(","))
            continue
        m = _LINE.match(line)
        if not m:
            raise ValueError(f"cannot parse gate line {line!r}")
        if m.group("c") is not None:
            gates.append(Gate("CNOT", (int(m.group("c")), int(m.group("t")))))
        else:
            gates.append(Gate(line[:2].upper(), (int(m.group("q")),), float(m.group("angle"))))
    if n is None:
        raise ValueError("missing '// N = ...' header line")
    return GateProgram(n, gates, params=params, pattern=pattern)
