from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from oracles import (
    explicit_metric_and_d,
    expm,
    fd_derivatives,
    fd_third_derivative,
    product_unitary,
    two_level_reference_matrices,
    two_level_params,
)
from varprop.analytic import cubic_2exp, split_traces, three_block_two_step_params
from varprop.ansatz import ProductAnsatz, assemble_unitary, parameter_derivatives
from varprop.engine import (
    FULL,
    TraceScope,
    christoffel,
    eom_rhs_l1,
    force_vector,
    geometric_tensor,
    hamiltonian_coupling,
    integrate_l1,
    integrate_l2,
    integrate_two_step,
    krylov_basis,
    magnetization_trajectory,
    mean_residual,
    residual_norm,
    second_force,
    select_ordering,
    two_step_unitary,
)
from varprop.models import all_up_state, build_qim, build_two_level, build_xxz_nn, build_xxz_nnn, magnetization
from varprop.propagators import exact_propagator, ts1, ts2

QIM5 = build_qim(1.0, 1.0, 1.0, 5)
TWO = build_two_level(5.0, 2.0)


def blocks_of(ansatz):
    return [ansatz.split.block(b) for b, _ in ansatz.factors]


# -- ansatz ----------------------------------------------------------------------


def test_zero_parameters_give_identity():
    for pattern in ("AB", "BAB", "ABAB", "ABABABA"):
        a = ProductAnsatz.from_pattern(QIM5, pattern)
        assert np.allclose(assemble_unitary(a, np.zeros(a.n_params)), np.eye(32))


def test_two_exp_with_ts_parameters_is_ts1():
    a = ProductAnsatz.from_pattern(QIM5, "AB")
    assert np.allclose(assemble_unitary(a, [-0.3, -0.3]), ts1(QIM5, 0.3), atol=1e-13)


def test_two_level_closed_form_parameters_reproduce_exact():
    a = ProductAnsatz.from_pattern(TWO, "ABA")
    for t in (0.05, 0.3, 0.7, 1.0):
        c = two_level_params(5.0, 2.0, t)[0]
        assert np.max(np.abs(assemble_unitary(a, c) - exact_propagator(TWO.H, t))) < 1e-9


def test_assemble_matches_pade_product():
    rng = np.random.default_rng(0)
    a = ProductAnsatz.from_pattern(QIM5, "BABA")
    c = rng.uniform(-1, 1, 4)
    assert np.allclose(assemble_unitary(a, c), product_unitary(blocks_of(a), c), atol=1e-12)


def test_palindromic_ansatz_shares_slots():
    a = ProductAnsatz.palindromic(QIM5, "BAB")
    assert a.n_params == 2 and a.factors == (("B", 0), ("A", 1), ("B", 0))
    b = ProductAnsatz.from_pattern(QIM5, "BAB")
    assert np.allclose(assemble_unitary(a, [0.2, -0.4]), assemble_unitary(b, [0.2, -0.4, 0.2]))
    with pytest.raises(ValueError):
        ProductAnsatz.palindromic(QIM5, "BA")


def test_fixed_slot_is_not_a_parameter():
    a = ProductAnsatz(QIM5, (("A", 0), ("B", 1), ("A", 2)), (None, None, 0.0))
    assert a.n_params == 2
    full = ProductAnsatz.from_pattern(QIM5, "AB")
    assert np.allclose(assemble_unitary(a, [0.1, 0.4]), assemble_unitary(full, [0.1, 0.4]))


@pytest.mark.parametrize(
    "factors, slots",
    [((("Q", 0),), (None,)), ((("A", 1),), (None,)), ((("A", 0),), (None, None))],
)
def test_ansatz_validation(factors, slots):
    with pytest.raises(ValueError):
        ProductAnsatz(QIM5, factors, slots)


def test_parameter_length_checked():
    a = ProductAnsatz.from_pattern(QIM5, "BAB")
    with pytest.raises(ValueError):
        assemble_unitary(a, [0.1, 0.2])


def test_ts_coefficients():
    assert np.allclose(ProductAnsatz.from_pattern(QIM5, "AB").ts_coefficients(), [-1, -1])
    assert np.allclose(ProductAnsatz.from_pattern(QIM5, "BAB").ts_coefficients(), [-0.5, -1, -0.5])
    assert np.allclose(ProductAnsatz.from_pattern(QIM5, "BABA").ts_coefficients(), [-0.5, -0.5, -0.5, -0.5])
    assert np.allclose(ProductAnsatz.palindromic(QIM5, "BAB").ts_coefficients(), [-0.5, -1])


def test_first_derivatives_match_finite_differences():
    rng = np.random.default_rng(1)
    a = ProductAnsatz.from_pattern(build_qim(0.8, 1.1, 0.4, 3), "BABA")
    c = rng.uniform(-1, 1, 4)
    fd = fd_derivatives(lambda x: product_unitary(blocks_of(a), x), c)
    dU = parameter_derivatives(a, c)
    for j in range(4):
        assert np.max(np.abs(dU[j] - fd[j])) < 1e-8


def test_shared_slot_derivative_sums_factors():
    a = ProductAnsatz.palindromic(build_qim(0.8, 1.1, 0.4, 3), "BAB")
    c = np.array([0.3, -0.7])
    fd = fd_derivatives(lambda x: assemble_unitary(a, x), c)
    assert np.max(np.abs(parameter_derivatives(a, c)[0] - fd[0])) < 1e-8


def test_christoffel_matches_second_finite_differences():
    rng = np.random.default_rng(2)
    split = build_qim(0.8, 1.1, 0.4, 3)
    a = ProductAnsatz.from_pattern(split, "ABA")
    c = rng.uniform(-1, 1, 3)
    h = 1e-4
    dU = parameter_derivatives(a, c)
    gam = christoffel(a, c)
    for l in range(3):
        e = np.zeros(3)
        e[l] = h
        d2 = (parameter_derivatives(a, c + e) - parameter_derivatives(a, c - e)) / (2 * h)
        for k in range(3):
            want = np.array([np.vdot(dU[j], d2[k]) for j in range(3)])
            assert np.allclose(gam[:, l, k], want, atol=1e-6)


def test_l2_tensors_match_definitions():
    rng = np.random.default_rng(3)
    split = build_qim(0.8, 1.1, 0.4, 3)
    a = ProductAnsatz.from_pattern(split, "BAB")
    c = rng.uniform(-1, 1, 3)
    U = assemble_unitary(a, c)
    dU = parameter_derivatives(a, c)
    H = split.H
    B = np.array([[np.vdot(dU[j], H @ dU[k]) for k in range(3)] for j in range(3)])
    F2 = np.array([-np.vdot(dU[j], H @ H @ U) for j in range(3)])
    assert np.allclose(hamiltonian_coupling(a, c, H), B)
    assert np.allclose(second_force(a, c, H), F2)


# -- metric and force ---------------------------------------------------------


def test_metric_at_origin_is_trace_gram():
    a = ProductAnsatz.from_pattern(QIM5, "AB")
    A, B = QIM5.block("A"), QIM5.block("B")
    g = geometric_tensor(a, [0.0, 0.0])
    want = np.array([[np.trace(A @ A), np.trace(A @ B)], [np.trace(A @ B), np.trace(B @ B)]])
    assert np.allclose(g, want)


def test_force_at_origin():
    a = ProductAnsatz.from_pattern(QIM5, "AB")
    H = QIM5.H
    F = force_vector(a, [0.0, 0.0], H)
    want = [-1j * np.trace(QIM5.block(k) @ H) for k in "AB"]
    assert np.allclose(F, want)


CROSS_CASES = [
    (build_qim(1.0, 1.0, 1.0, 4), "BAB"),
    (build_qim(0.7, 1.2, 0.5, 4), "BABA"),
    (build_xxz_nn(1.0, 0.9, 5), "ABA"),
    (build_xxz_nn(1.0, 0.9, 5), "ABAB"),
    (build_xxz_nnn(2.0, 0.5, 0.2, 0.2, 4), "ABC"),
    (build_xxz_nnn(2.0, 0.5, 0.2, 0.2, 4), "ABCA"),
]


@pytest.mark.parametrize("split, pattern", CROSS_CASES, ids=[f"{s.family}-{p}" for s, p in CROSS_CASES])
def test_builder_matches_explicit_three_and_four_factor_entries(split, pattern):
    rng = np.random.default_rng(len(pattern))
    a = ProductAnsatz.from_pattern(split, pattern)
    for _ in range(20):
        c = rng.uniform(-1.5, 1.5, a.n_params)
        g_ref, D_ref = explicit_metric_and_d(blocks_of(a), c, split.H)
        g = geometric_tensor(a, c)
        F = force_vector(a, c, split.H)
        assert np.max(np.abs(g - g_ref)) < 1e-9 * max(1.0, np.max(np.abs(g_ref)))
        assert np.max(np.abs(-1j * F - D_ref)) < 1e-9 * max(1.0, np.max(np.abs(D_ref)))


def test_two_level_matrices_proportional_to_reference_form():
    a = ProductAnsatz.from_pattern(TWO, "ABA")
    rng = np.random.default_rng(4)
    for _ in range(10):
        c = rng.uniform(-1, 1, 3)
        g_p, b_p = two_level_reference_matrices(5.0, 2.0, c)
        g = geometric_tensor(a, c)
        D = -1j * force_vector(a, c, TWO.H)
        # raw traces carry Tr[I] = 2 relative to the reference entries
        assert np.allclose(g, 2 * g_p, atol=1e-12)
        assert np.allclose(D, -2 * b_p, atol=1e-12)


def test_krylov_full_dimension_equals_full_scope():
    a = ProductAnsatz.from_pattern(build_qim(1, 1, 1, 3), "BAB")
    H = a.split.H
    rng = np.random.default_rng(5)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    scope = krylov_basis(H, psi / np.linalg.norm(psi), 8)
    assert scope.size == 8
    c = rng.uniform(-1, 1, 3)
    assert np.allclose(geometric_tensor(a, c, scope), geometric_tensor(a, c, FULL))
    assert np.allclose(force_vector(a, c, H, scope), force_vector(a, c, H, FULL))


# -- first-order solve ------------------------------------------------------------


def test_velocity_at_origin_two_exp():
    assert np.allclose(eom_rhs_l1(ProductAnsatz.from_pattern(QIM5, "AB"), [0, 0], QIM5.H), [-1, -1])


def test_velocity_at_origin_three_exp_min_norm():
    a = ProductAnsatz.from_pattern(QIM5, "BAB")
    assert np.allclose(eom_rhs_l1(a, [0, 0, 0], QIM5.H), [-0.5, -1, -0.5])


@pytest.mark.parametrize(
    "split, pattern",
    [(QIM5, "ABAB"), (QIM5, "BABABAB"), (QIM5, "BAB*"), (build_xxz_nn(1.0, 0.9, 4), "ABA"), (build_xxz_nnn(2.0, 0.5, 0.2, 0.2, 4), "CBCACBC")],
)
def test_velocity_at_origin_is_ts_vector(split, pattern):
    if pattern.endswith("*"):
        a = ProductAnsatz.palindromic(split, pattern[:-1])
    else:
        a = ProductAnsatz.from_pattern(split, pattern)
    assert np.allclose(eom_rhs_l1(a, np.zeros(a.n_params), split.H), a.ts_coefficients(), atol=1e-10)


def test_closed_form_two_level_satisfies_first_order_equations():
    a = ProductAnsatz.from_pattern(TWO, "ABA")
    h = 1e-6
    for t in (0.1, 0.4, 0.9):
        c = two_level_params(5.0, 2.0, t)[0]
        cdot = (two_level_params(5.0, 2.0, t + h)[0] - two_level_params(5.0, 2.0, t - h)[0]) / (2 * h)
        g = geometric_tensor(a, c)
        F = force_vector(a, c, TWO.H)
        assert np.max(np.abs(g @ cdot + 1j * F)) < 1e-8 * np.max(np.abs(F))
        assert residual_norm(a, c, cdot, TWO.H) < 1e-7


def test_residual_norm_limits():
    a = ProductAnsatz.from_pattern(QIM5, "BAB")
    assert math.isclose(residual_norm(a, np.zeros(3), np.zeros(3), QIM5.H), np.linalg.norm(QIM5.H))
    # c = -t (1, 1) leaves a first-order residual; the symmetric start a second-order one
    two = ProductAnsatz.from_pattern(QIM5, "AB")
    r = [residual_norm(two, -t * np.ones(2), -np.ones(2), QIM5.H) for t in (0.02, 0.01)]
    assert 1.9 < r[0] / r[1] < 2.1
    ts = a.ts_coefficients()
    r = [residual_norm(a, t * ts, ts, QIM5.H) for t in (0.02, 0.01)]
    assert 3.8 < r[0] / r[1] < 4.2


# -- integration ------------------------------------------------------------------


def test_two_level_trajectory_matches_closed_form():
    a = ProductAnsatz.from_pattern(TWO, "ABA")
    grid = np.linspace(0, 1, 201)
    traj = integrate_l1(a, TWO.H, 1.0, grid)
    assert np.max(np.abs(traj.values - two_level_params(5.0, 2.0, grid))) < 1e-6
    assert np.all(traj.rhs_imag_max < 1e-8)
    assert np.all(traj.values[0] == 0)


def test_l2_reproduces_l1_for_two_level():
    # c1 returns to zero at Omega t = pi where the metric is singular, so both
    # solves run with tightened tolerances to keep the comparison at 1e-6
    a = ProductAnsatz.from_pattern(TWO, "ABA")
    grid = np.linspace(0, 1, 101)
    t1 = integrate_l1(a, TWO.H, 1.0, grid, rtol=1e-11, atol=1e-14)
    t2 = integrate_l2(a, TWO.H, 1.0, grid, rtol=1e-11, atol=1e-14)
    assert np.max(np.abs(t1.values - t2.values)) < 1e-6


def test_qim_trajectory_smooth_and_near_linear():
    a = ProductAnsatz.from_pattern(QIM5, "BAB")
    grid = np.linspace(0, 0.5, 51)
    traj = integrate_l1(a, QIM5.H, 0.5, grid)
    assert np.all(np.isfinite(traj.values))
    assert np.all(np.diff(traj.values, axis=0) < 0)
    assert np.allclose(traj.values[-1], 0.5 * a.ts_coefficients(), atol=0.05)


def test_small_t_deviation_is_cubic():
    a = ProductAnsatz.from_pattern(QIM5, "BAB")
    traj = integrate_l1(a, QIM5.H, 0.1, [0.05, 0.1])
    ts = a.ts_coefficients()
    dev = [np.max(np.abs(traj.values[i] - t * ts)) for i, t in enumerate((0.05, 0.1))]
    assert 7.0 < dev[1] / dev[0] < 9.0


def test_backward_integration_is_odd_for_real_hamiltonian():
    a = ProductAnsatz.from_pattern(QIM5, "BAB")
    fwd = integrate_l1(a, QIM5.H, 0.3, [0.3]).final
    bwd = integrate_l1(a, QIM5.H, -0.3, [-0.3]).final
    # real blocks: complex conjugation maps U(c) to U(-c) and exp(-iHt) to exp(iHt)
    assert np.allclose(bwd, -fwd, atol=1e-9)


def test_tolerance_halving_consistency():
    a = ProductAnsatz.from_pattern(QIM5, "BABA")
    loose = integrate_l1(a, QIM5.H, 0.5, [0.5], rtol=1e-7, atol=1e-10).final
    tight = integrate_l1(a, QIM5.H, 0.5, [0.5], rtol=5e-8, atol=5e-11).final
    assert np.max(np.abs(loose - tight)) < 10 * 1e-7


def test_integrate_rejects_zero_span_and_bad_grid():
    a = ProductAnsatz.from_pattern(QIM5, "AB")
    with pytest.raises(ValueError):
        integrate_l1(a, QIM5.H, 0.0)
    with pytest.raises(ValueError):
        integrate_l1(a, QIM5.H, 0.2, [0.1, 0.3])


def test_trajectory_dense_output_and_csv(tmp_path):
    a = ProductAnsatz.from_pattern(QIM5, "BAB")
    traj = integrate_l1(a, QIM5.H, 0.4, np.linspace(0, 0.4, 5))
    assert np.allclose(traj(0.2), traj.values[2], atol=1e-12)
    assert traj.steps > 0 and traj.rejects >= 0
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    rows = list(csv.reader(open(path, encoding="utf-8")))
    assert rows[0] == ["t", "c_0", "c_1", "c_2", "residual"]
    assert len(rows) == 6
    assert float(rows[-1][1]) == traj.values[-1, 0]
    assert mean_residual(traj) > 0


def test_l2_cubic_coefficients_for_two_exp():
    a = ProductAnsatz.from_pattern(QIM5, "BA")
    cubic = cubic_2exp(split_traces(QIM5, ("B", "A"), dense=True), "l2").cubic

    def at(t):
        return integrate_l2(a, QIM5.H, t, [t], rtol=1e-12, atol=1e-15).final

    assert np.allclose(fd_third_derivative(at, 0.02), cubic, rtol=1e-3)


def test_krylov_trajectory_matches_full():
    split = build_qim(1, 1, 1, 3)
    a = ProductAnsatz.from_pattern(split, "BAB")
    rng = np.random.default_rng(6)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    scope = krylov_basis(split.H, psi / np.linalg.norm(psi), 8)
    grid = np.linspace(0, 0.4, 9)
    full = integrate_l1(a, split.H, 0.4, grid)
    kry = integrate_l1(a, split.H, 0.4, grid, scope=scope)
    assert np.max(np.abs(full.values - kry.values)) < 1e-6


# -- ordering ---------------------------------------------------------------------


def test_select_ordering_two_level():
    cands = [ProductAnsatz.from_pattern(TWO, p) for p in ("BA", "AB")]
    ranked, failures = select_ordering(cands, TWO.H, 0.5)
    assert not failures
    assert ranked[0].ansatz.pattern == "AB"
    assert ranked[0].score < ranked[1].score


def test_select_ordering_qim():
    cands = [ProductAnsatz.from_pattern(QIM5, p) for p in ("ABA", "BAB")]
    ranked, _ = select_ordering(cands, QIM5.H, 0.4)
    assert [r.ansatz.pattern for r in ranked] == ["BAB", "ABA"]


def test_select_ordering_ties_keep_input_order():
    a1 = ProductAnsatz.from_pattern(QIM5, "BAB", name="first")
    a2 = ProductAnsatz.from_pattern(QIM5, "BAB", name="second")
    ranked, _ = select_ordering([a1, a2], QIM5.H, 0.2)
    assert [r.ansatz.name for r in ranked] == ["first", "second"]


def test_select_ordering_input_checks():
    with pytest.raises(ValueError):
        select_ordering([ProductAnsatz.from_pattern(QIM5, "AB")], QIM5.H, 0.1)
    other = build_qim(1, 1, 1, 5)
    with pytest.raises(ValueError):
        select_ordering([ProductAnsatz.from_pattern(QIM5, "AB"), ProductAnsatz.from_pattern(other, "AB")], QIM5.H, 0.1)


# -- Krylov basis and observables -------------------------------------------------


def test_krylov_single_vector():
    psi = all_up_state(3)
    scope = krylov_basis(build_qim(1, 1, 1, 3).H, psi, 1)
    assert scope.size == 1 and np.allclose(scope.basis[:, 0], psi)


def test_krylov_collapses_on_eigenvector():
    H = build_qim(1, 1, 1, 3).H
    w, V = np.linalg.eigh(H)
    assert krylov_basis(H, V[:, 2], 6).size == 1


def test_krylov_qim_orthonormal():
    scope = krylov_basis(QIM5.H, all_up_state(5), 5)
    B = scope.basis
    assert B.shape == (32, 5)
    assert np.max(np.abs(B.conj().T @ B - np.eye(5))) < 1e-10


def test_krylov_input_checks():
    with pytest.raises(ValueError):
        krylov_basis(QIM5.H, np.zeros(32), 2)
    with pytest.raises(ValueError):
        krylov_basis(QIM5.H, all_up_state(5), 33)
    with pytest.raises(ValueError):
        TraceScope("krylov", np.ones((4, 2)))
    with pytest.raises(ValueError):
        TraceScope("partial")


def test_magnetization_trajectory_basics():
    psi = all_up_state(3)
    assert np.allclose(magnetization_trajectory(psi, np.eye(8), 0), [0.5])
    assert np.allclose(magnetization_trajectory(psi, np.eye(8), 4), 0.5)


def test_magnetization_exact_steps_match_direct_evaluation():
    psi = all_up_state(5)
    step = exact_propagator(QIM5.H, 0.2)
    curve = magnetization_trajectory(psi, step, 10)
    for n in (0, 3, 10):
        phi = expm(-0.2j * n * QIM5.H) @ psi
        assert math.isclose(curve[n], magnetization(phi, 5), abs_tol=1e-10)


# -- two-step splitting -----------------------------------------------------------


NNN = build_xxz_nnn(2.0, 0.5, 0.2, 0.2, 5)


def test_two_step_small_t_gives_ts_values():
    t = 1e-4
    traj = integrate_two_step(NNN, t, [t])
    # c1 = -t drives the inner stage for an effective time t
    assert np.allclose(traj.final, [-t / 2, -t, -t / 2, -t / 2, -t, -t / 2], atol=1e-11)


def test_two_step_matches_closed_form_to_fifth_order():
    traces = split_traces(NNN, ("A", "B", "C"))
    dev = []
    for t in (0.1, 0.05):
        num = integrate_two_step(NNN, t, [t]).final
        dev.append(np.max(np.abs(num - three_block_two_step_params(traces, t))))
    assert dev[0] < 1e-4
    assert dev[0] / dev[1] > 20


def test_two_step_unitary_layout():
    rng = np.random.default_rng(7)
    p = rng.uniform(-1, 1, 6)
    A, B, C = (NNN.block(k) for k in "ABC")
    want = product_unitary([A, B, C, B, A], [p[0], p[3], p[4], p[5], p[2]])
    assert np.allclose(two_step_unitary(NNN, p), want, atol=1e-12)
    with pytest.raises(ValueError):
        two_step_unitary(NNN, np.zeros(5))
