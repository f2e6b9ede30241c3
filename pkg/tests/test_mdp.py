import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brl.constructions import random_mdp
from brl.mdp import (
    DeterministicPolicy,
    TabularMdp,
    average_bellman_error,
    bellman_optimality,
    bellman_policy,
    class_suboptimality_bound,
    compute_occupancy,
    compute_step_marginal,
    expected_return,
    greedy_policy,
    load_mdp,
    optimal_q,
    performance_difference_bound,
    policy_q,
    save_mdp,
    state_occupancy,
    telescoping_residual,
    two_sided_bound,
    value_iteration,
)

from conftest import mdps, policies_for, q_tables


def occupancy_by_series(mdp, pi, horizon=4000):
    # truncated discounted sum of step marginals, computed by repeated matrix products
    S = mdp.num_states
    P_pi = np.array([mdp.transition[s, pi.action[s]] for s in range(S)])
    nu_t = mdp.init_dist.copy()
    total = np.zeros(S)
    for t in range(horizon):
        total += (1 - mdp.gamma) * mdp.gamma**t * nu_t
        nu_t = nu_t @ P_pi
    return total


def rollout_return(mdp, pi, episodes, horizon, rng):
    S = mdp.num_states
    total = 0.0
    for _ in range(episodes):
        s = rng.choice(S, p=mdp.init_dist)
        g, disc = 0.0, 1.0
        for _ in range(horizon):
            a = pi.action[s]
            g += disc * mdp.reward[s, a]
            disc *= mdp.gamma
            s = rng.choice(S, p=mdp.transition[s, a])
        total += g
    return total / episodes


def test_validation_rejects_bad_inputs():
    P = np.full((2, 1, 2), 0.5)
    R = np.zeros((2, 1))
    d0 = np.array([0.5, 0.5])
    TabularMdp(P, R, 0.9, d0)
    with pytest.raises(ValueError):
        TabularMdp(P * 1.1, R, 0.9, d0)
    with pytest.raises(ValueError):
        TabularMdp(P, R, 1.0, d0)
    with pytest.raises(ValueError):
        TabularMdp(P, R, 0.9, np.array([0.7, 0.7]))
    with pytest.raises(ValueError):
        TabularMdp(P, R - 1.0, 0.9, d0)
    with pytest.raises(ValueError):
        TabularMdp(P, np.zeros((2, 2)), 0.9, d0)


def test_state_action_cap_env_var(monkeypatch):
    monkeypatch.setenv("BRL_MAX_STATE_ACTIONS", "5")
    with pytest.raises(ValueError, match="BRL_MAX_STATE_ACTIONS"):
        random_mdp(3, 2, 0.9, seed=0)
    monkeypatch.setenv("BRL_MAX_STATE_ACTIONS", "6")
    random_mdp(3, 2, 0.9, seed=0)


def test_json_roundtrip(tmp_path, small_mdp):
    path = tmp_path / "m.json"
    save_mdp(small_mdp, path)
    back = load_mdp(path)
    assert np.array_equal(back.transition, small_mdp.transition)
    assert np.array_equal(back.reward, small_mdp.reward)
    assert back.gamma == small_mdp.gamma and back.r_max == small_mdp.r_max
    raw = json.loads(path.read_text())
    assert {"num_states", "num_actions", "gamma", "transition", "reward", "init_dist"} <= set(raw)


def test_policy_range_checked(small_mdp):
    with pytest.raises(ValueError):
        compute_occupancy(small_mdp, DeterministicPolicy((0, 5, 0)))
    with pytest.raises(ValueError):
        compute_occupancy(small_mdp, DeterministicPolicy((0, 0)))


@given(st.data())
def test_occupancy_matches_series(data):
    mdp = data.draw(mdps(gammas=(0.5, 0.9)))
    pi = data.draw(policies_for(mdp))
    nu = state_occupancy(mdp, pi)
    assert np.allclose(nu, occupancy_by_series(mdp, pi), atol=1e-12)
    d = compute_occupancy(mdp, pi)
    assert abs(d.sum() - 1) < 1e-12
    off = np.ones(mdp.shape, dtype=bool)
    off[np.arange(mdp.num_states), pi.as_array()] = False
    assert np.all(d[off] == 0)


@given(st.data())
def test_step_marginal_is_distribution(data):
    mdp = data.draw(mdps())
    pi = data.draw(policies_for(mdp))
    t = data.draw(st.integers(0, 20))
    m = compute_step_marginal(mdp, pi, t)
    assert abs(m.sum() - 1) < 1e-12 and m.min() >= 0
    if t == 0:
        assert np.allclose(m.sum(axis=1), mdp.init_dist)


def test_expected_return_matches_rollouts():
    mdp = random_mdp(4, 2, 0.8, seed=3)
    pi = DeterministicPolicy((0, 1, 1, 0))
    rng = np.random.default_rng(0)
    mc = rollout_return(mdp, pi, episodes=4000, horizon=80, rng=rng)
    # per-episode returns are bounded by 5, so 4000 episodes give std error < 0.08
    assert abs(mc - expected_return(mdp, pi)) < 0.25


def test_bellman_operator_brute_force(small_mdp):
    q = np.random.default_rng(0).uniform(0, small_mdp.v_max, size=small_mdp.shape)
    S, A = small_mdp.shape
    tq = np.zeros((S, A))
    for s, a in itertools.product(range(S), range(A)):
        tq[s, a] = small_mdp.reward[s, a] + small_mdp.gamma * sum(
            small_mdp.transition[s, a, s2] * max(q[s2]) for s2 in range(S))
    assert np.allclose(bellman_optimality(small_mdp, q), tq, atol=1e-14)
    pi = DeterministicPolicy((1, 0, 1))
    tpq = np.zeros((S, A))
    for s, a in itertools.product(range(S), range(A)):
        tpq[s, a] = small_mdp.reward[s, a] + small_mdp.gamma * sum(
            small_mdp.transition[s, a, s2] * q[s2, pi.action[s2]] for s2 in range(S))
    assert np.allclose(bellman_policy(small_mdp, pi, q), tpq, atol=1e-14)


def test_greedy_ties_lowest_index():
    q = np.array([[1.0, 1.0, 0.5], [0.2, 0.3, 0.3]])
    assert greedy_policy(q).action == (0, 1)


@given(mdps(max_states=5, max_actions=3, gammas=(0.5, 0.9)))
def test_optimal_q_fixed_point_and_brute_force(mdp):
    qs = optimal_q(mdp)
    assert np.max(np.abs(bellman_optimality(mdp, qs) - qs)) < 1e-9
    # brute force over every deterministic policy
    best = max(expected_return(mdp, DeterministicPolicy(p))
               for p in itertools.product(range(mdp.num_actions), repeat=mdp.num_states))
    assert abs(expected_return(mdp, greedy_policy(qs)) - best) < 1e-9
    vi = value_iteration(mdp, tol=1e-12)
    assert np.max(np.abs(vi - qs)) < 1e-9 / (1 - mdp.gamma)


@given(st.data())
def test_policy_q_is_fixed_point(data):
    mdp = data.draw(mdps())
    pi = data.draw(policies_for(mdp))
    q = policy_q(mdp, pi)
    assert np.max(np.abs(bellman_policy(mdp, pi, q) - q)) < 1e-9
    j = float(mdp.init_dist @ q[np.arange(mdp.num_states), pi.as_array()])
    assert abs(j - expected_return(mdp, pi)) < 1e-9


@given(st.data())
def test_telescoping_identity(data):
    mdp = data.draw(mdps())
    pi = data.draw(policies_for(mdp))
    q = data.draw(q_tables(mdp))
    assert abs(telescoping_residual(mdp, pi, q)) < 1e-9


@given(st.data())
def test_performance_difference_bounds(data):
    mdp = data.draw(mdps())
    pi = data.draw(policies_for(mdp))
    q, f = data.draw(q_tables(mdp)), data.draw(q_tables(mdp))
    gap = expected_return(mdp, pi) - expected_return(mdp, greedy_policy(q))
    assert gap <= performance_difference_bound(mdp, pi, q) + 1e-9
    two = abs(expected_return(mdp, greedy_policy(f)) - expected_return(mdp, greedy_policy(q)))
    assert two <= two_sided_bound(mdp, q, f) + 1e-9
    pols = [greedy_policy(q), greedy_policy(f), pi]
    loss = max(expected_return(mdp, p) for p in pols) - expected_return(mdp, greedy_policy(q))
    assert loss <= class_suboptimality_bound(mdp, pols, q) + 1e-9


def test_average_bellman_error_zero_at_optimum(small_mdp):
    qs = optimal_q(small_mdp)
    for p in itertools.product(range(2), repeat=3):
        assert abs(average_bellman_error(small_mdp, DeterministicPolicy(p), qs)) < 1e-9
