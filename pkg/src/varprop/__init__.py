"""Variational product formulas for Hamiltonian simulation."""

from __future__ import annotations

from .analytic import (
    CubicParams,
    TraceRecord,
    chi_factor,
    cubic_2exp,
    cubic_3exp,
    dense_traces,
    ising_closed_traces,
    split_traces,
    three_block_two_step_params,
    xxz_nn_closed_traces,
    xxz_nnn_closed_traces,
)
from .ansatz import ProductAnsatz, assemble_unitary
from .circuits import GateCounts, GateProgram, emit_qim_ansatz, export_text, gate_counts, program_to_unitary
from .engine import (
    FULL,
    ParameterTrajectory,
    TraceScope,
    eom_rhs_l1,
    force_vector,
    geometric_tensor,
    integrate_l1,
    integrate_l2,
    integrate_two_step,
    krylov_basis,
    magnetization_trajectory,
    select_ordering,
)
from .estimator import VariationalPropagator
from .models import HamiltonianSplit, build_qim, build_two_level, build_xxz_nn, build_xxz_nnn
from .propagators import exact_propagator, repeat_stroboscopic, ruth4, ts1, ts2, ts7_abc

__version__ = "0.1.0"
