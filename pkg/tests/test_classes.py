import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from brl.classes import (
    LinearQClass,
    QClass,
    WClass,
    check_span_coefficients,
    class_from_dict,
    class_to_dict,
    grid_q_class,
    indicator_w_class,
    linear_q_members,
    span_evaluate,
    span_max_abs,
)
from brl.constructions import random_lowrank_mdp, random_mdp, theta_grid
from brl.data import DataDistribution
from brl.mdp import bellman_optimality


def test_q_class_range_checked():
    QClass(np.zeros((1, 2, 2)), v_max=1.0)
    with pytest.raises(ValueError):
        QClass(np.full((1, 2, 2), 1.5), v_max=1.0)
    with pytest.raises(ValueError):
        QClass(np.full((1, 2, 2), -0.1), v_max=1.0)
    with pytest.raises(ValueError):
        QClass(np.zeros((0, 2, 2)), v_max=1.0)
    with pytest.raises(ValueError):
        WClass(np.array([[[np.nan]]]))


def test_policies_deduplicated_in_order():
    members = np.array([[[1, 0]], [[0, 1]], [[2, 0]], [[0, 3]]], dtype=float)
    pols = QClass(members, v_max=3.0).policies()
    assert [p.action for p in pols] == [(0,), (1,)]


@given(st.integers(1, 6), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_span_max_matches_lp_oracle(k, S, A, seed):
    rng = np.random.default_rng(seed)
    W = WClass(rng.normal(size=(k, S, A)))
    c = rng.normal(size=(S, A))
    g = np.tensordot(W.members, c, axes=([1, 2], [0, 1]))
    # max g.a over the l1 ball, written as an LP in (a+, a-)
    best = 0.0
    for sign in (1.0, -1.0):
        res = linprog(-sign * np.concatenate([g, -g]), A_ub=np.ones((1, 2 * k)), b_ub=[1.0],
                      bounds=(0, None), method="highs")
        best = max(best, -res.fun)
    assert span_max_abs(W, c) == pytest.approx(best, abs=1e-12)


def test_span_coefficients_checked():
    W = WClass(np.eye(2).reshape(2, 1, 2))
    assert np.allclose(span_evaluate(W, [0.5, -0.5]), [[0.5, -0.5]])
    with pytest.raises(ValueError):
        check_span_coefficients([0.7, 0.7], 2)
    with pytest.raises(ValueError):
        check_span_coefficients([0.7], 2)


def test_indicator_class():
    mu = DataDistribution(np.array([[0.1, 0.2], [0.3, 0.4]]))
    W = indicator_w_class(2, 2, mu, scaled=True)
    assert len(W) == 4
    assert np.allclose(sum(W.members * mu.mu), np.ones((2, 2)))
    plain = indicator_w_class(2, 2)
    assert np.allclose(plain.members.sum(axis=0), 1)
    with pytest.raises(ValueError):
        indicator_w_class(2, 2, scaled=True)


def test_grid_class_size_and_shuffle():
    g0 = grid_q_class(2, 1, [0.0, 1.0, 2.0], v_max=2.0)
    g1 = grid_q_class(2, 1, [0.0, 1.0, 2.0], v_max=2.0, seed=3)
    assert len(g0) == 9
    key = lambda m: sorted(map(tuple, m.reshape(len(m), -1)))
    assert key(g0.members) == key(g1.members)
    assert not np.array_equal(g0.members, g1.members)


def test_linear_class_closed_under_bellman_update():
    spec, mdp = random_lowrank_mdp(5, 2, 2, seed=4)
    lin = LinearQClass.from_factor(spec.left_factor, mdp, theta_grid(2, np.linspace(0, mdp.v_max, 3)))
    q_class = linear_q_members(lin, mdp)
    basis = lin.features
    for q in q_class:
        tq = bellman_optimality(mdp, q).reshape(-1)
        coef, *_ = np.linalg.lstsq(basis, tq, rcond=None)
        assert np.max(np.abs(basis @ coef - tq)) < 1e-10
        assert coef[-1] == pytest.approx(1.0, abs=1e-10)


def test_linear_class_validation():
    mdp = random_mdp(3, 2, 0.9, seed=0)
    with pytest.raises(ValueError):
        LinearQClass(np.ones((6, 3)), np.zeros((1, 3)))
    lin = LinearQClass(np.column_stack([np.ones(6), np.zeros(6)]), [[1.0]])
    with pytest.raises(ValueError, match="reward"):
        linear_q_members(lin, mdp)


def test_class_dict_formats():
    mdp = random_mdp(2, 2, 0.9, seed=0)
    mu = DataDistribution.uniform(2, 2)
    q = class_from_dict({"type": "grid", "values": [0.0, 1.0]}, mdp)
    assert len(q) == 16
    again = class_from_dict(class_to_dict(q), mdp)
    assert np.array_equal(again.members, q.members)
    w = class_from_dict({"type": "indicator", "scaled": True}, mdp, mu, kind="w")
    assert np.allclose(w.members.max(axis=(1, 2)), 4.0)
    with pytest.raises(ValueError):
        class_from_dict({"type": "mystery"}, mdp)
