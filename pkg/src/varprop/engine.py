"""Equations of motion for product-ansatz parameters and their integration.

The first-order equations read  g c' + i F = 0  with the geometric tensor
g_jk = Tr[(dU/dc_j)^dag dU/dc_k] and force F_j = Tr[(dU/dc_j)^dag H U].  The
second-order variant follows from the squared-residual action and reads
g c'' + Gamma c' c' + 2i B c' + F2 = 0.  Traces may be restricted to a Krylov
subspace of an initial state.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45, trapezoid

from .ansatz import (
    ProductAnsatz,
    acceleration_generator,
    assemble_unitary,
    second_derivative_generators,
    tangent,
)
from .models import HamiltonianSplit, magnetization
from .validation import ImaginaryResidueError, SolverError, StepSizeUnderflowError, check_state

log = logging.getLogger(__name__)

PINV_RCOND = 1e-10
IMAG_TOL = 1e-8
DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12


# -- trace scopes -------------------------------------------------------------


@dataclass(frozen=True)
class TraceScope:
    """Full trace, or partial trace over an orthonormal Krylov basis (columns of ``basis``)."""

    mode: str = "full"
    basis: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("full", "krylov"):
            raise ValueError(f"unknown trace scope {self.mode!r}")
        if self.mode == "krylov":
            if self.basis is None:
                raise ValueError("krylov scope needs a basis")
            B = self.basis
            gram = B.conj().T @ B
            if np.max(np.abs(gram - np.eye(B.shape[1]))) > 1e-10:
                raise ValueError("krylov basis is not orthonormal")

    @property
    def size(self) -> int | None:
        return None if self.basis is None else self.basis.shape[1]

    def frame(self, U: np.ndarray) -> np.ndarray:
        """Matrix W with Tr_scope[X^dag Y U] = vdot(X W, Y W)-style contractions."""
        return U if self.mode == "full" else U @ self.basis


FULL = TraceScope()


def krylov_basis(H, psi0, n_vectors: int, tol: float = 1e-10) -> TraceScope:
    """Orthonormal basis of span{psi0, H psi0, ..., H^(n-1) psi0}.

    Modified Gram-Schmidt with one re-orthogonalisation pass; the basis stops
    early when a new direction has norm below ``tol``.
    """
    H = np.asarray(H, dtype=complex)
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    dim = H.shape[0]
    if not 1 <= n_vectors <= dim:
        raise ValueError(f"Krylov size must be in 1..{dim}, got {n_vectors}")
    nrm = np.linalg.norm(psi0)
    if nrm == 0:
        raise ValueError("initial state is the zero vector")
    vecs = [psi0 / nrm]
    while len(vecs) < n_vectors:
        w = H @ vecs[-1]
        for _ in range(2):
            for v in vecs:
                w = w - np.vdot(v, w) * v
        wn = np.linalg.norm(w)
        if wn < tol:
            break
        vecs.append(w / wn)
    return TraceScope("krylov", np.column_stack(vecs))


# -- tensors ------------------------------------------------------------------


def _contract(Z: np.ndarray, X: np.ndarray) -> np.ndarray:
    """out[j] = Tr[Z_j^dag X] for a stack Z (m, d, k) and X (d, k)."""
    return np.einsum("jab,ab->j", Z.conj(), X)


def _frames(ansatz: ProductAnsatz, c, scope: TraceScope):
    tg = tangent(ansatz, c)
    W = scope.frame(tg.U)
    Z = tg.Y @ W
    return tg, W, Z


def geometric_tensor(ansatz: ProductAnsatz, c, scope: TraceScope = FULL) -> np.ndarray:
    """g_jk = Tr_scope[(dU/dc_j)^dag dU/dc_k]."""
    _, _, Z = _frames(ansatz, c, scope)
    return np.einsum("jab,kab->jk", Z.conj(), Z)


def force_vector(ansatz: ProductAnsatz, c, H, scope: TraceScope = FULL) -> np.ndarray:
    """F_j = Tr_scope[(dU/dc_j)^dag H U]."""
    _, W, Z = _frames(ansatz, c, scope)
    return _contract(Z, np.asarray(H) @ W)


def christoffel(ansatz: ProductAnsatz, c, scope: TraceScope = FULL) -> np.ndarray:
    """Gamma_{j,lk} = Tr_scope[(dU/dc_j)^dag d^2U/dc_l dc_k]."""
    tg, W, Z = _frames(ansatz, c, scope)
    S = second_derivative_generators(tg)
    return np.einsum("jab,lkac,cb->jlk", Z.conj(), S, W, optimize=True)


def hamiltonian_coupling(ansatz: ProductAnsatz, c, H, scope: TraceScope = FULL) -> np.ndarray:
    """B_jk = Tr_scope[(dU/dc_j)^dag H dU/dc_k]."""
    _, _, Z = _frames(ansatz, c, scope)
    HZ = np.asarray(H) @ Z
    return np.einsum("jab,kab->jk", Z.conj(), HZ)


def second_force(ansatz: ProductAnsatz, c, H, scope: TraceScope = FULL) -> np.ndarray:
    """F2_j = -Tr_scope[(dU/dc_j)^dag H^2 U]."""
    _, W, Z = _frames(ansatz, c, scope)
    H = np.asarray(H)
    return -_contract(Z, H @ (H @ W))


# -- linear solve -------------------------------------------------------------


@dataclass
class VelocitySolve:
    value: np.ndarray
    imag_residue: float
    asymmetry: float


def _solve_real(g: np.ndarray, rhs: np.ndarray, scope: TraceScope, check_imag: bool) -> VelocitySolve:
    asym = float(np.max(np.abs(g - g.conj().T)))
    g = 0.5 * (g + g.conj().T)
    if scope.mode == "full":
        x = np.linalg.pinv(g, rcond=PINV_RCOND, hermitian=True) @ rhs
    else:
        # partial traces make g complex; keep the real-inner-product projection
        x_c = np.linalg.pinv(g, rcond=PINV_RCOND, hermitian=True) @ rhs
        x = np.linalg.pinv(g.real, rcond=PINV_RCOND, hermitian=True) @ rhs.real
        return VelocitySolve(x, float(np.max(np.abs(x_c.imag))) if x_c.size else 0.0, asym)
    re, im = x.real, x.imag
    imag = float(np.max(np.abs(im))) if im.size else 0.0
    if check_imag and imag >= IMAG_TOL * (1.0 + (np.max(np.abs(re)) if re.size else 0.0)):
        raise ImaginaryResidueError(f"imaginary velocity residue {imag:.3e} exceeds tolerance")
    return VelocitySolve(re, imag, asym)


def solve_velocity(ansatz: ProductAnsatz, c, H, scope: TraceScope = FULL, check_imag: bool = True) -> VelocitySolve:
    _, W, Z = _frames(ansatz, c, scope)
    g = np.einsum("jab,kab->jk", Z.conj(), Z)
    F = _contract(Z, np.asarray(H) @ W)
    return _solve_real(g, -1j * F, scope, check_imag)


def eom_rhs_l1(ansatz: ProductAnsatz, c, H, scope: TraceScope = FULL) -> np.ndarray:
    """Parameter velocities solving g c' = -i F (minimum-norm where g is singular)."""
    return solve_velocity(ansatz, c, H, scope).value


def solve_acceleration(ansatz: ProductAnsatz, c, cdot, H, scope: TraceScope = FULL) -> VelocitySolve:
    """Solve g c'' = -(Gamma c'c' + 2i B c' + F2), keeping the real projection."""
    H = np.asarray(H)
    tg, W, Z = _frames(ansatz, c, scope)
    g = np.einsum("jab,kab->jk", Z.conj(), Z)
    cdot = np.asarray(cdot, dtype=float)
    Ydot = np.tensordot(cdot, tg.Y, axes=1)
    Q = acceleration_generator(tg, cdot)
    X = Q @ W + 2j * H @ (Ydot @ W) - H @ (H @ W)
    return _solve_real(g, -_contract(Z, X), scope, check_imag=False)


def residual_norm(ansatz: ProductAnsatz, c, cdot, H) -> float:
    """||i dU/dt - H U||_F with dU/dt = sum_j dU/dc_j c'_j."""
    tg = tangent(ansatz, c)
    Ydot = np.tensordot(np.asarray(cdot, dtype=float), tg.Y, axes=1)
    # U is unitary, so the norm of (i Ydot - H) U equals that of i Ydot - H
    return float(np.linalg.norm(1j * Ydot - np.asarray(H)))


# -- trajectories -------------------------------------------------------------


@dataclass
class ParameterTrajectory:
    times: np.ndarray
    values: np.ndarray
    velocities: np.ndarray
    residual: np.ndarray
    rhs_imag_max: np.ndarray
    steps: int = 0
    rejects: int = 0
    nfev: int = 0
    method: str = "l1"
    labels: list[str] = field(default_factory=list)
    dense: object = None

    def __call__(self, t) -> np.ndarray:
        """Parameters at arbitrary ``t`` inside the integrated interval (dense output)."""
        return np.asarray(self.dense(t))[: self.values.shape[1]]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def to_rows(self):
        header = ["t"] + [f"c_{j}" for j in range(self.values.shape[1])] + ["residual"]
        rows = [[t, *v, r] for t, v, r in zip(self.times, self.values, self.residual)]
        return header, rows

    def to_csv(self, path) -> None:
        header, rows = self.to_rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([f"{x:.17g}" for x in row])


class _Dense:
    """Piecewise dense output collected from accepted steps."""

    def __init__(self):
        self.bounds: list[tuple[float, float]] = []
        self.interps = []

    def add(self, t0, t1, interp):
        self.bounds.append((min(t0, t1), max(t0, t1)))
        self.interps.append(interp)

    def __call__(self, t):
        t = float(t)
        for (a, b), f in zip(self.bounds, self.interps):
            if a - 1e-14 <= t <= b + 1e-14:
                return f(t)
        raise ValueError(f"t={t} outside integrated interval")


def _make_grid(t_end: float, grid) -> np.ndarray:
    if grid is None:
        grid = np.linspace(0.0, t_end, 101)
    elif np.isscalar(grid):
        grid = np.linspace(0.0, t_end, int(grid))
    grid = np.asarray(grid, dtype=float)
    if grid.size and (np.any(np.abs(grid) > abs(t_end) + 1e-12) or np.any(np.sign(grid) * np.sign(t_end) < 0)):
        raise ValueError("grid must lie between 0 and t_end")
    return grid


def _run_rk45(fun, y0, t_end, grid, rtol, atol):
    """Dormand-Prince 4(5) with dense output sampled on ``grid``."""
    solver = RK45(fun, 0.0, np.asarray(y0, dtype=float), t_end, rtol=rtol, atol=atol)
    dense = _Dense()
    order = np.argsort(np.abs(grid))
    out = np.empty((grid.size, len(y0)))
    gi = 0
    while gi < grid.size and grid[order[gi]] == 0.0:
        out[order[gi]] = y0
        gi += 1
    steps = 0
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise StepSizeUnderflowError(solver.t, msg or "")
        steps += 1
        interp = solver.dense_output()
        dense.add(solver.t_old, solver.t, interp)
        while gi < grid.size and abs(grid[order[gi]]) <= abs(solver.t) + 1e-15:
            out[order[gi]] = interp(grid[order[gi]])
            gi += 1
    if gi < grid.size:
        raise SolverError("integration stopped before covering the requested grid")
    # every attempted step costs six evaluations (first-same-as-last); two go to the start-up
    attempts = max(steps, (solver.nfev - 2) // 6)
    return out, dense, steps, attempts - steps, solver.nfev


def integrate_l1(
    ansatz: ProductAnsatz,
    H,
    t_end: float,
    grid=None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    scope: TraceScope = FULL,
) -> ParameterTrajectory:
    """Integrate g c' + i F = 0 from c(0) = 0.

    ``t_end`` may be negative to integrate backwards in time.
    """
    if t_end == 0:
        raise ValueError("t_end must be nonzero")
    H = np.asarray(H, dtype=complex)
    grid = _make_grid(t_end, grid)

    def fun(t, y):
        try:
            return solve_velocity(ansatz, y, H, scope).value
        except ImaginaryResidueError as exc:
            raise ImaginaryResidueError(f"{exc} at t={t:.6g}") from None

    y0 = np.zeros(ansatz.n_params)
    vals, dense, steps, rejects, nfev = _run_rk45(fun, y0, t_end, grid, rtol, atol)
    vel = np.empty_like(vals)
    imag = np.empty(grid.size)
    resid = np.empty(grid.size)
    for i, c in enumerate(vals):
        sol = solve_velocity(ansatz, c, H, scope)
        vel[i], imag[i] = sol.value, sol.imag_residue
        resid[i] = residual_norm(ansatz, c, sol.value, H)
    return ParameterTrajectory(grid, vals, vel, resid, imag, steps, rejects, nfev, "l1", [ansatz.name], dense)


def integrate_l2(
    ansatz: ProductAnsatz,
    H,
    t_end: float,
    grid=None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    scope: TraceScope = FULL,
) -> ParameterTrajectory:
    """Integrate the second-order equations with c(0) = 0 and c'(0) from the first-order solve."""
    if t_end == 0:
        raise ValueError("t_end must be nonzero")
    H = np.asarray(H, dtype=complex)
    grid = _make_grid(t_end, grid)
    m = ansatz.n_params

    def fun(t, y):
        acc = solve_acceleration(ansatz, y[:m], y[m:], H, scope)
        return np.concatenate([y[m:], acc.value])

    v0 = eom_rhs_l1(ansatz, np.zeros(m), H, scope)
    y0 = np.concatenate([np.zeros(m), v0])
    states, dense, steps, rejects, nfev = _run_rk45(fun, y0, t_end, grid, rtol, atol)
    vals, vel = states[:, :m], states[:, m:]
    imag = np.array([solve_acceleration(ansatz, c, v, H, scope).imag_residue for c, v in zip(vals, vel)])
    resid = np.array([residual_norm(ansatz, c, v, H) for c, v in zip(vals, vel)])
    return ParameterTrajectory(grid, vals, vel, resid, imag, steps, rejects, nfev, "l2", [ansatz.name], dense)


def mean_residual(traj: ParameterTrajectory) -> float:
    t = traj.times
    if t.size < 2:
        return float(traj.residual[0])
    return float(trapezoid(traj.residual, t) / (t[-1] - t[0]))


@dataclass
class RankedAnsatz:
    ansatz: ProductAnsatz
    score: float
    trajectory: ParameterTrajectory


def select_ordering(candidates, H, tau: float, n_grid: int = 41, **kwargs):
    """Rank candidate ansaetze by their time-averaged residual on [0, tau].

    Returns (ranked, failures); ties keep the input order.
    """
    candidates = list(candidates)
    if len(candidates) < 2:
        raise ValueError("need at least two candidates")
    splits = {id(a.split.H) for a in candidates}
    if len(splits) != 1:
        raise ValueError("candidates must share one Hamiltonian split")
    ranked: list[RankedAnsatz] = []
    failures: list[tuple[ProductAnsatz, Exception]] = []
    for a in candidates:
        try:
            traj = integrate_l1(a, H, tau, np.linspace(0.0, tau, n_grid), **kwargs)
        except SolverError as exc:
            log.warning("candidate %s failed: %s", a.name, exc)
            failures.append((a, exc))
            continue
        ranked.append(RankedAnsatz(a, mean_residual(traj), traj))
    ranked.sort(key=lambda r: r.score)
    return ranked, failures


# -- observables --------------------------------------------------------------


def magnetization_trajectory(psi0, U_step, n_steps: int) -> np.ndarray:
    """Magnetisation of psi0 and after each of ``n_steps`` applications of ``U_step``."""
    U_step = np.asarray(U_step)
    psi = check_state(psi0, U_step.shape[0])
    n = int(np.log2(U_step.shape[0]))
    out = np.empty(int(n_steps) + 1)
    out[0] = magnetization(psi, n)
    for k in range(1, int(n_steps) + 1):
        psi = U_step @ psi
        out[k] = magnetization(psi, n)
    return out


def frozen_step(ansatz: ProductAnsatz, traj: ParameterTrajectory) -> np.ndarray:
    """Single-step unitary with the parameters frozen at the end of ``traj``."""
    return assemble_unitary(ansatz, traj.final)


# -- two-step splitting of three blocks ---------------------------------------


def _pair_split(split: HamiltonianSplit, first: str, second: str) -> HamiltonianSplit:
    blocks = {first: split.block(first), second: split.block(second)}
    terms = {first: split.terms[first], second: split.terms[second]}
    return HamiltonianSplit(split.family, split.n_qubits, blocks[first] + blocks[second], blocks, terms, dict(split.couplings))


def integrate_two_step(
    split: HamiltonianSplit,
    t_end: float,
    grid=None,
    roles=("A", "B", "C"),
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> ParameterTrajectory:
    """Nested three-exponential trajectories for H = A + (B + C).

    The outer stage evolves exp(i c0 A) exp(i c1 (B+C)) exp(i c0 A) under H; the
    middle factor is then replaced by exp(i c3 B) exp(i c4 C) exp(i c3 B) evolved
    under B + C up to the effective time -c1(t).  Values hold (c0, c1, c2, c3, c4, c5)
    with c2 = c0 and c5 = c3.
    """
    a, b, c = roles
    merged = split.merged([b, c], "BC")
    outer = ProductAnsatz(merged, ((a, 0), ("BC", 1), (a, 0)), (None, None), "outer")
    tr1 = integrate_l1(outer, split.H, t_end, grid, rtol, atol)
    inner_split = _pair_split(split, b, c)
    inner = ProductAnsatz(inner_split, ((b, 0), (c, 1), (b, 0)), (None, None), "inner")
    s = -tr1.values[:, 1]
    inner_vals = np.zeros((s.size, 2))
    for sign in (1.0, -1.0):
        mask = s * sign > 0
        if not np.any(mask):
            continue
        s_end = sign * np.max(np.abs(s[mask]))
        tr2 = integrate_l1(inner, inner_split.H, s_end, s[mask], rtol, atol)
        inner_vals[mask] = tr2.values
    vals = np.column_stack([tr1.values[:, 0], tr1.values[:, 1], tr1.values[:, 0], inner_vals[:, 0], inner_vals[:, 1], inner_vals[:, 0]])
    return ParameterTrajectory(
        tr1.times, vals, np.full_like(vals, np.nan), tr1.residual, tr1.rhs_imag_max,
        tr1.steps, tr1.rejects, tr1.nfev, "two_step", ["two_step"], None,
    )


def two_step_unitary(split: HamiltonianSplit, params, roles=("A", "B", "C")) -> np.ndarray:
    """exp(i c0 A) exp(i c3 B) exp(i c4 C) exp(i c5 B) exp(i c2 A) for params (c0, ..., c5)."""
    a, b, c = roles
    p = np.asarray(params, dtype=float)
    if p.shape != (6,):
        raise ValueError(f"expected 6 parameters, got shape {p.shape}")
    ansatz = ProductAnsatz.from_pattern(split, a + b + c + b + a)
    return assemble_unitary(ansatz, [p[0], p[3], p[4], p[5], p[2]])
