from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import expm, random_hermitian
from varprop.models import HamiltonianSplit, build_qim, build_two_level, build_xxz_nnn
from varprop.operators import frobenius_error
from varprop.propagators import (
    FORMULAS,
    RUTH_P,
    RUTH_Q,
    exact_propagator,
    exact_step,
    repeat_stroboscopic,
    ruth4,
    ts1,
    ts2,
    ts7_abc,
)


def commuting_split(n_blocks=2, seed=0):
    """Blocks that are functions of one Hermitian matrix, hence mutually commuting."""
    rng = np.random.default_rng(seed)
    H0 = random_hermitian(rng, 4)
    w, V = np.linalg.eigh(H0)
    blocks = {}
    for k in range(n_blocks):
        blocks["ABC"[k]] = (V * rng.normal(size=4)) @ V.conj().T
    return HamiltonianSplit("custom", 2, sum(blocks.values()), blocks, {k: [] for k in blocks})


def err(split, fn, t):
    return frobenius_error(exact_propagator(split.H, t), fn(split, t))


def test_ruth_coefficients():
    assert math.isclose(RUTH_P, 1.351207191959657, rel_tol=1e-12)
    assert math.isclose(RUTH_Q, -1.702414383919315, rel_tol=1e-12)


@pytest.mark.parametrize("name", sorted(FORMULAS))
def test_coefficient_sums_are_one(name):
    assert np.allclose(FORMULAS[name].coefficient_sums(), 1.0)


def test_ruth_has_seven_factors():
    assert len(FORMULAS["ruth4"].factors) == 7
    assert FORMULAS["ruth4"].pattern(["A", "B"]) == "ABABABA"
    assert FORMULAS["ts7"].pattern(["A", "B", "C"]) == "CBCACBC"


@pytest.mark.parametrize("fn", [ts1, ts2, ruth4])
def test_commuting_blocks_exact(fn):
    split = commuting_split()
    for t in (0.3, 1.7):
        assert err(split, fn, t) < 1e-13


def test_ts7_commuting_exact():
    split = commuting_split(3)
    assert err(split, ts7_abc, 0.9) < 1e-13


@pytest.mark.parametrize("fn", [ts1, ts2, ruth4])
def test_zero_time_identity(fn):
    assert np.allclose(fn(build_qim(1, 1, 1, 3), 0.0), np.eye(8))
    assert np.allclose(exact_propagator(build_qim(1, 1, 1, 3).H, 0.0), np.eye(8))


def test_ts7_zero_time_identity():
    assert np.allclose(ts7_abc(build_xxz_nnn(2, 0.5, 0.2, 0.2, 3), 0.0), np.eye(8))


def test_ts1_matches_dense_two_level():
    split = build_two_level(5, 2)
    A, B = split.block("A"), split.block("B")
    direct = np.linalg.norm(expm(-0.2j * (A + B)) - expm(-0.2j * A) @ expm(-0.2j * B)) / (2 * math.sqrt(2))
    assert math.isclose(err(split, ts1, 0.2), direct, rel_tol=1e-9)


def test_ts2_third_order_ratio():
    split = build_qim(1, 1, 1, 5)
    ratio = err(split, ts2, 0.1) / err(split, ts2, 0.05)
    assert 7.5 < ratio < 8.5


def test_ruth_fifth_order_local_ratio():
    split = build_qim(1, 1, 1, 5)
    ratio = err(split, ruth4, 0.2) / err(split, ruth4, 0.1)
    assert 30 < ratio < 34


def test_ts7_error_small_and_third_order():
    split = build_xxz_nnn(2.0, 0.5, 0.2, 0.2, 5)
    e1, e2 = err(split, ts7_abc, 0.1), err(split, ts7_abc, 0.05)
    assert 0 < e1 < 1e-2
    assert 7.0 < e1 / e2 < 9.0


def test_ts2_time_reversal():
    split = build_qim(1, 0.7, 0.3, 4)
    t = 0.37
    assert np.allclose(ts2(split, t) @ ts2(split, -t), np.eye(16), atol=1e-13)


def test_formula_block_count_checked():
    with pytest.raises(ValueError):
        ts7_abc(build_qim(1, 1, 1, 3), 0.1)


def test_repeat_counts_and_group_property():
    H = build_qim(1, 1, 1, 4).H
    step = exact_step(H, 0.2)
    P, n = repeat_stroboscopic(step, 5 * 0.2, 0.2)
    assert n == 5
    P, n = repeat_stroboscopic(step, 13.0, 0.2)
    assert n == 65
    assert np.max(np.abs(P - exact_propagator(H, 13.0))) < 1e-8


def test_floor_step_counts():
    I = np.eye(2)
    assert repeat_stroboscopic(I, 40.0, 0.6)[1] == 66
    assert repeat_stroboscopic(I, 40.0, 0.5)[1] == 80


def test_repeat_rejects_bad_input():
    with pytest.raises(ValueError):
        repeat_stroboscopic(np.eye(2), 1.0, 0.0)
    with pytest.raises(ValueError):
        repeat_stroboscopic(np.array([[1, 1], [0, 1]], dtype=complex), 1.0, 0.1)
