"""JSON-configured experiments producing deterministic CSV tables."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import analytic
from .ansatz import ProductAnsatz, assemble_unitary
from .engine import DEFAULT_ATOL, DEFAULT_RTOL, integrate_l1, integrate_l2, krylov_basis, magnetization_trajectory
from .models import (
    HamiltonianSplit,
    all_up_state,
    build_qim,
    build_two_level,
    build_xxz_nn,
    build_xxz_nnn,
)
from .operators import frobenius_error, matexp_hermitian, strob_error_curve
from .propagators import FORMULAS, apply_formula
from .validation import SolverError

log = logging.getLogger(__name__)

COUPLINGS = {
    "two_level": ("h_x", "h_z"),
    "qim": ("J", "h_x", "h_z"),
    "xxz_nn": ("J1", "delta1"),
    "xxz_nnn": ("J1", "J2", "delta1", "delta2"),
}
FIXED_METHODS = ("exact", "ts1", "ts2", "ruth4", "ts7")
METHOD_RE = re.compile(r"^(exact|ts1|ts2|ruth4|ts7|var_l1|var_l2|var_cubic|var_krylov\((\d+)\))$")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class MethodFailure(SolverError):
    """A solver failure annotated with the method that raised it."""

    def __init__(self, column: str, exc: Exception):
        super().__init__(f"method {column}: {exc}")
        self.column = column
        self.original = exc


# -- schema -------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSpec(_Strict):
    family: Literal["two_level", "qim", "xxz_nn", "xxz_nnn"]
    couplings: dict[str, float]
    N: int | list[int] = 1

    @model_validator(mode="after")
    def _check(self):
        need = set(COUPLINGS[self.family])
        have = set(self.couplings)
        if need != have:
            missing = sorted(need - have)
            extra = sorted(have - need)
            raise ValueError(f"couplings for {self.family} must be {sorted(need)}; missing {missing}, unexpected {extra}")
        sizes = self.sizes
        if self.family == "two_level" and sizes != [1]:
            raise ValueError("two_level model has N = 1")
        lo = {"two_level": 1, "qim": 2, "xxz_nn": 3, "xxz_nnn": 3}[self.family]
        for n in sizes:
            if not lo <= n <= 12:
                raise ValueError(f"N = {n} outside {lo}..12 for {self.family}")
        return self

    @property
    def sizes(self) -> list[int]:
        return list(self.N) if isinstance(self.N, list) else [self.N]


class AnsatzSpec(_Strict):
    patterns: list[str] = Field(min_length=1)
    shared: bool = False
    formula_order: str | None = None


class TimeSpec(_Strict):
    t_max: float | None = None
    n_points: int = 101
    grid: list[float] | None = None
    t_total: float | None = None
    tau: float | None = None

    @model_validator(mode="after")
    def _check(self):
        if self.grid is not None:
            g = np.asarray(self.grid)
            if g.size == 0 or np.any(np.diff(g) <= 0) or g[0] < 0:
                raise ValueError("grid must be non-empty, non-negative and strictly increasing")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")
        return self


class Tolerances(_Strict):
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL


class ExperimentConfig(_Strict):
    model: ModelSpec
    ansatz: AnsatzSpec
    methods: list[str] = Field(min_length=1)
    time: TimeSpec
    observable: Literal["frobenius", "strob_frobenius", "magnetization", "params"]
    initial_state: Literal["all_up"] = "all_up"
    tolerances: Tolerances = Field(default_factory=Tolerances)
    workers: int = Field(default=1, ge=1)
    output: str | None = None

    @field_validator("methods")
    @classmethod
    def _methods(cls, v):
        for m in v:
            if not METHOD_RE.match(m):
                raise ValueError(f"unknown method {m!r}")
        if len(set(v)) != len(v):
            raise ValueError("duplicate methods")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        t = self.time
        if self.observable in ("strob_frobenius", "magnetization"):
            if t.t_total is None or t.tau is None:
                raise ValueError(f"observable {self.observable} needs time.t_total and time.tau")
        elif t.grid is None and t.t_max is None:
            raise ValueError(f"observable {self.observable} needs time.grid or time.t_max")
        if self.observable == "params" and any(not m.startswith("var") for m in self.methods):
            raise ValueError("observable params accepts variational methods only")
        names = {"two_level": "AB", "qim": "AB", "xxz_nn": "AB", "xxz_nnn": "ABC"}[self.model.family]
        for p in self.ansatz.patterns:
            if not p or set(p) - set(names):
                raise ValueError(f"pattern {p!r} uses blocks outside {names}")
            if self.ansatz.shared and p != p[::-1]:
                raise ValueError(f"shared slots need palindromic patterns, got {p!r}")
        fo = self.ansatz.formula_order
        if fo is not None and sorted(fo) != sorted(names):
            raise ValueError(f"formula_order must be a permutation of {names}")
        return self


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- result table -------------------------------------------------------------


@dataclass
class ResultTable:
    columns: list[str]
    rows: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns)) if len(self.columns) else np.empty((0, 0))

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


def write_csv(table: ResultTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(table))


def format_csv(table: ResultTable) -> str:
    lines = [",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


def read_csv(path) -> ResultTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(x) for x in line.strip().split(",")] for line in fh if line.strip()]
    return ResultTable(header, np.array(rows) if rows else np.empty((0, len(header))))


# -- execution ----------------------------------------------------------------


def build_split(spec: ModelSpec, n: int) -> HamiltonianSplit:
    c = spec.couplings
    if spec.family == "two_level":
        return build_two_level(c["h_x"], c["h_z"])
    if spec.family == "qim":
        return build_qim(c["J"], c["h_x"], c["h_z"], n)
    if spec.family == "xxz_nn":
        return build_xxz_nn(c["J1"], c["delta1"], n)
    return build_xxz_nnn(c["J1"], c["J2"], c["delta1"], c["delta2"], n)


@dataclass(frozen=True)
class MethodJob:
    """One column group: a method applied to one pattern (or one ordering)."""

    method: str
    pattern: str
    column: str
    krylov: int | None = None


def _jobs(cfg: ExperimentConfig, split: HamiltonianSplit) -> list[MethodJob]:
    jobs = []
    order = cfg.ansatz.formula_order or cfg.ansatz.patterns[0]
    order = "".join(dict.fromkeys(order))
    for m in cfg.methods:
        km = METHOD_RE.match(m)
        if m in FIXED_METHODS:
            if m == "exact":
                jobs.append(MethodJob(m, "", "exact"))
                continue
            formula = FORMULAS[m]
            if formula.n_blocks != len(split.blocks):
                raise ConfigError(f"methods: {m} needs {formula.n_blocks} blocks, model has {len(split.blocks)}")
            names = list(order) + [b for b in split.block_names if b not in order]
            jobs.append(MethodJob(m, "".join(names), f"{m}_{formula.pattern(names)}"))
            continue
        for p in cfg.ansatz.patterns:
            if m == "var_l1":
                jobs.append(MethodJob(m, p, f"var_{p}"))
            elif km.group(2) is not None:
                jobs.append(MethodJob("var_krylov", p, f"var_krylov{km.group(2)}_{p}", int(km.group(2))))
            else:
                jobs.append(MethodJob(m, p, f"{m}_{p}"))
    return jobs


def _make_ansatz(split: HamiltonianSplit, pattern: str, shared: bool) -> ProductAnsatz:
    return ProductAnsatz.palindromic(split, pattern) if shared else ProductAnsatz.from_pattern(split, pattern)


def _cubic_params(split: HamiltonianSplit, pattern: str):
    """Closed-form CubicParams for two-block patterns, or None."""
    if len(pattern) == 2 and len(set(pattern)) == 2:
        return analytic.cubic_2exp(analytic.split_traces(split, tuple(pattern)))
    if len(pattern) == 3 and pattern[0] == pattern[2] != pattern[1]:
        return analytic.cubic_3exp(analytic.split_traces(split, (pattern[0], pattern[1])))
    return None


def _cubic(split: HamiltonianSplit, pattern: str):
    """(ansatz, t -> slot values) for patterns with closed-form cubic parameters."""
    cp = _cubic_params(split, pattern)
    if cp is not None:
        ansatz = ProductAnsatz.from_pattern(split, pattern) if len(pattern) == 2 else ProductAnsatz.palindromic(split, pattern)
        return ansatz, cp.evaluate
    if len(pattern) == 5 and pattern == pattern[::-1] and len(set(pattern)) == 3:
        rec = analytic.split_traces(split, (pattern[0], pattern[1], pattern[2]))

        def slots(t):
            c = analytic.three_block_two_step_params(rec, t)
            return np.array([c[0], c[3], c[4]])

        return ProductAnsatz.palindromic(split, pattern), slots
    raise ConfigError(f"ansatz.patterns: no cubic closed form for pattern {pattern!r}")


class _Context:
    def __init__(self, cfg: ExperimentConfig, split: HamiltonianSplit):
        self.cfg = cfg
        self.split = split
        self.H = split.H
        self.tol = dict(rtol=cfg.tolerances.rtol, atol=cfg.tolerances.atol)
        self.psi0 = all_up_state(split.n_qubits)

    def params_on(self, job: MethodJob, times: np.ndarray):
        """(ansatz, parameter array of shape (len(times), m)) for a variational job."""
        split, cfg = self.split, self.cfg
        t_end = float(times[-1])
        if job.method == "var_cubic":
            ansatz, fn = _cubic(split, job.pattern)
            return ansatz, np.array([fn(t) for t in times])
        ansatz = _make_ansatz(split, job.pattern, cfg.ansatz.shared)
        if t_end == 0.0:
            return ansatz, np.zeros((times.size, ansatz.n_params))
        if job.method == "var_l1":
            traj = integrate_l1(ansatz, self.H, t_end, times, **self.tol)
        elif job.method == "var_l2":
            traj = integrate_l2(ansatz, self.H, t_end, times, **self.tol)
        else:
            scope = krylov_basis(self.H, self.psi0, min(job.krylov, split.dim))
            traj = integrate_l1(ansatz, self.H, t_end, times, scope=scope, **self.tol)
        return ansatz, traj.values

    def unitaries(self, job: MethodJob, times: np.ndarray) -> list[np.ndarray]:
        if job.method == "exact":
            return [matexp_hermitian(self.H, -t) for t in times]
        if job.method in FIXED_METHODS:
            split = self.split.reordered(list(job.pattern))
            return [apply_formula(split, FORMULAS[job.method], t) for t in times]
        ansatz, vals = self.params_on(job, times)
        return [assemble_unitary(ansatz, c) for c in vals]

    def step(self, job: MethodJob, tau: float) -> np.ndarray:
        return self.unitaries(job, np.array([0.0, tau]))[1]


def _time_grid(t: TimeSpec) -> np.ndarray:
    if t.grid is not None:
        return np.asarray(t.grid, dtype=float)
    return np.linspace(0.0, t.t_max, t.n_points)


def _n_steps(t: TimeSpec) -> int:
    return int(np.floor(t.t_total / t.tau + 1e-12))


def _run_job(ctx: _Context, job: MethodJob) -> dict[str, np.ndarray]:
    cfg = ctx.cfg
    obs = cfg.observable
    if obs == "frobenius":
        times = _time_grid(cfg.time)
        exact = [matexp_hermitian(ctx.H, -t) for t in times]
        return {job.column: np.array([frobenius_error(e, u) for e, u in zip(exact, ctx.unitaries(job, times))])}
    if obs == "params":
        times = _time_grid(cfg.time)
        _, vals = ctx.params_on(job, times)
        return {f"{job.column}_c{j}": vals[:, j] for j in range(vals.shape[1])}
    n = _n_steps(cfg.time)
    tau = cfg.time.tau
    step = ctx.step(job, tau)
    if obs == "strob_frobenius":
        return {job.column: strob_error_curve(ctx.H, step, tau, n)}
    mag = magnetization_trajectory(ctx.psi0, step, n)
    if job.method == "exact":
        return {"exact": mag}
    ref = magnetization_trajectory(ctx.psi0, matexp_hermitian(ctx.H, -tau), n)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs((ref - mag) / ref)
    return {job.column: mag, f"{job.column}_relerr": rel}


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Run every method for every system size; columns keep config order."""
    sizes = cfg.model.sizes
    blocks: list[tuple[list[str], list[np.ndarray]]] = []
    for n in sizes:
        split = build_split(cfg.model, n)
        ctx = _Context(cfg, split)
        jobs = _jobs(cfg, split)

        def run(job, ctx=ctx):
            try:
                return _run_job(ctx, job)
            except SolverError as exc:
                raise MethodFailure(job.column, exc) from exc

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(run, jobs))
        else:
            results = [run(j) for j in jobs]
        suffix = f"_N{n}" if len(sizes) > 1 else ""
        names, cols = [], []
        for res in results:
            for k, v in res.items():
                names.append(k + suffix)
                cols.append(np.asarray(v, dtype=float))
        blocks.append((names, cols))
    obs = cfg.observable
    if obs in ("frobenius", "params"):
        t = _time_grid(cfg.time)
    elif obs == "strob_frobenius":
        t = cfg.time.tau * np.arange(1, _n_steps(cfg.time) + 1)
    else:
        t = cfg.time.tau * np.arange(0, _n_steps(cfg.time) + 1)
    columns = ["t"] + [n for names, _ in blocks for n in names]
    data = [t] + [c for _, cols in blocks for c in cols]
    if len(set(columns)) != len(columns):
        raise ConfigError("duplicate output columns; check patterns and methods")
    return ResultTable(columns, np.column_stack(data) if t.size else np.empty((0, len(columns))))


def cubic_coefficients(cfg: ExperimentConfig) -> ResultTable:
    """Per-slot linear and cubic coefficients for every pattern (first system size)."""
    split = build_split(cfg.model, cfg.model.sizes[0])
    params, cols = [], ["slot"]
    for p in cfg.ansatz.patterns:
        cp = _cubic_params(split, p)
        if cp is None:
            raise ConfigError(f"ansatz.patterns: no two-block cubic closed form for pattern {p!r}")
        params.append(cp)
        cols += [f"linear_{p}", f"cubic_{p}"]
    m = max(len(cp) for cp in params)
    table = np.full((m, len(cols)), np.nan)
    table[:, 0] = np.arange(m)
    for k, cp in enumerate(params):
        table[: len(cp), 1 + 2 * k] = cp.linear
        table[: len(cp), 2 + 2 * k] = cp.cubic
    return ResultTable(cols, table)
