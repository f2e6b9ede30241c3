"""Exact tabular MDP model.

Q-functions, weight functions and occupancy measures are plain ``(S, A)``
numpy arrays throughout the package; only the MDP itself and deterministic
policies get their own types.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_MAX_STATE_ACTIONS = 10_000
ROW_SUM_TOL = 1e-12
OCCUPANCY_RESIDUAL_TOL = 1e-8


class NumericalError(RuntimeError):
    """A dense solve returned a solution whose residual is out of tolerance."""


def max_state_actions() -> int:
    raw = os.environ.get("BRL_MAX_STATE_ACTIONS")
    return int(raw) if raw else DEFAULT_MAX_STATE_ACTIONS


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite discounted MDP ``(S, A, P, R, gamma, d0)``.

    ``r_max`` is the declared reward bound; it may exceed ``R.max()`` (e.g. an
    all-zero reward table still needs a positive value range for its Q-classes).
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    init_dist: np.ndarray
    r_max: float | None = None

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        R = np.array(self.reward, dtype=float)
        d0 = np.array(self.init_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if S * A > max_state_actions():
            raise ValueError(
                f"|S|*|A| = {S * A} exceeds the dense-size cap {max_state_actions()} "
                "(set BRL_MAX_STATE_ACTIONS to override)"
            )
        if R.shape != (S, A):
            raise ValueError(f"reward must have shape {(S, A)}, got {R.shape}")
        if d0.shape != (S,):
            raise ValueError(f"init_dist must have shape {(S,)}, got {d0.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > ROW_SUM_TOL):
            raise ValueError("every transition row must be a probability vector")
        if np.any(d0 < 0) or abs(d0.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError("init_dist must be a probability vector")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        r_max = float(R.max()) if self.r_max is None else float(self.r_max)
        if np.any(R < 0) or np.any(R > r_max):
            raise ValueError("rewards must lie in [0, r_max]")
        for arr in (P, R, d0):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "init_dist", d0)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", r_max)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.transition.shape[:2]

    @property
    def v_max(self) -> float:
        return self.r_max / (1.0 - self.gamma)

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "gamma": self.gamma,
            "r_max": self.r_max,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "init_dist": self.init_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TabularMdp":
        mdp = cls(
            transition=obj["transition"],
            reward=obj["reward"],
            gamma=obj["gamma"],
            init_dist=obj["init_dist"],
            r_max=obj.get("r_max"),
        )
        declared = (obj.get("num_states", mdp.num_states), obj.get("num_actions", mdp.num_actions))
        if declared != mdp.shape:
            raise ValueError(f"declared shape {declared} does not match tables {mdp.shape}")
        return mdp


def load_mdp(path: str | Path) -> TabularMdp:
    return TabularMdp.from_dict(json.loads(Path(path).read_text()))


def save_mdp(mdp: TabularMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp.to_dict()))


@dataclass(frozen=True)
class DeterministicPolicy:
    """State -> action table. Hashable, so policy sets deduplicate exactly."""

    action: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "action", tuple(int(a) for a in self.action))

    def __len__(self) -> int:
        return len(self.action)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.action, dtype=int)

    def onehot(self, num_actions: int) -> np.ndarray:
        """``(S, A)`` indicator of ``a == pi(s)``."""
        out = np.zeros((len(self.action), num_actions))
        out[np.arange(len(self.action)), self.action] = 1.0
        return out

    def check(self, mdp: TabularMdp) -> None:
        if len(self.action) != mdp.num_states:
            raise ValueError(f"policy covers {len(self.action)} states, MDP has {mdp.num_states}")
        if any(a < 0 or a >= mdp.num_actions for a in self.action):
            raise ValueError("policy action index out of range")


def policy_transition(mdp: TabularMdp, policy: DeterministicPolicy) -> np.ndarray:
    """``P_pi[s, s'] = P[s, pi(s), s']``."""
    policy.check(mdp)
    return mdp.transition[np.arange(mdp.num_states), policy.as_array()]


def state_occupancy(mdp: TabularMdp, policy: DeterministicPolicy) -> np.ndarray:
    """Normalized discounted state occupancy, by a dense direct solve of
    ``(I - gamma P_pi^T) nu = (1 - gamma) d0``."""
    P_pi = policy_transition(mdp, policy)
    lhs = np.eye(mdp.num_states) - mdp.gamma * P_pi.T
    rhs = (1.0 - mdp.gamma) * mdp.init_dist
    nu = np.linalg.solve(lhs, rhs)
    residual = np.max(np.abs(lhs @ nu - rhs))
    if residual > OCCUPANCY_RESIDUAL_TOL:
        raise NumericalError(f"occupancy solve residual {residual:.3e}")
    return nu


def compute_occupancy(mdp: TabularMdp, policy: DeterministicPolicy) -> np.ndarray:
    """State-action occupancy ``d_pi(s, a) = nu_pi(s) 1[a = pi(s)]``."""
    nu = state_occupancy(mdp, policy)
    return nu[:, None] * policy.onehot(mdp.num_actions)


def compute_step_marginal(mdp: TabularMdp, policy: DeterministicPolicy, t: int) -> np.ndarray:
    """Undiscounted marginal of ``(s_t, a_t)`` under ``policy``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    P_pi = policy_transition(mdp, policy)
    nu = mdp.init_dist.copy()
    for _ in range(t):
        nu = nu @ P_pi
    return nu[:, None] * policy.onehot(mdp.num_actions)


def next_state_max(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    """``E_{s' ~ P(.|s,a)} max_a' q(s', a')`` as an ``(S, A)`` table."""
    return mdp.transition @ np.max(q, axis=1)


def bellman_optimality(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return mdp.reward + mdp.gamma * next_state_max(mdp, q)


def bellman_policy(mdp: TabularMdp, policy: DeterministicPolicy, q: np.ndarray) -> np.ndarray:
    """``(T^pi q)(s, a) = R(s, a) + gamma E_{s'} q(s', pi(s'))``."""
    q = np.asarray(q, dtype=float)
    v = q[np.arange(mdp.num_states), policy.as_array()]
    return mdp.reward + mdp.gamma * (mdp.transition @ v)


def greedy_policy(q: np.ndarray) -> DeterministicPolicy:
    # np.argmax returns the first maximizer: ties go to the lowest action index.
    return DeterministicPolicy(tuple(np.argmax(np.asarray(q), axis=1)))


def expected_return(mdp: TabularMdp, policy: DeterministicPolicy) -> float:
    d = compute_occupancy(mdp, policy)
    return float(np.sum(d * mdp.reward) / (1.0 - mdp.gamma))


def policy_q(mdp: TabularMdp, policy: DeterministicPolicy) -> np.ndarray:
    """``Q^pi`` by solving ``(I - gamma P_pi) V = R_pi`` directly."""
    P_pi = policy_transition(mdp, policy)
    r_pi = mdp.reward[np.arange(mdp.num_states), policy.as_array()]
    v = np.linalg.solve(np.eye(mdp.num_states) - mdp.gamma * P_pi, r_pi)
    return mdp.reward + mdp.gamma * (mdp.transition @ v)


def optimal_q(mdp: TabularMdp, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """``Q*`` by policy iteration; exact up to linear-solve precision."""
    policy = greedy_policy(mdp.reward)
    for _ in range(max_iter):
        q = policy_q(mdp, policy)
        improved = greedy_policy(q)
        # only switch where the improvement is real, so ties cannot cycle
        gain = q.max(axis=1) - q[np.arange(mdp.num_states), policy.as_array()]
        if np.all(gain <= tol * max(1.0, mdp.v_max)):
            return q
        actions = np.where(gain > tol * max(1.0, mdp.v_max), improved.as_array(), policy.as_array())
        policy = DeterministicPolicy(tuple(actions))
    raise NumericalError("policy iteration did not terminate")


def value_iteration(mdp: TabularMdp, q0: np.ndarray | None = None, tol: float = 1e-12,
                    max_iter: int = 10_000_000) -> np.ndarray:
    """Iterate the optimality operator until successive iterates differ by < tol."""
    q = np.zeros(mdp.shape) if q0 is None else np.asarray(q0, dtype=float)
    for _ in range(max_iter):
        nxt = bellman_optimality(mdp, q)
        if np.max(np.abs(nxt - q)) < tol:
            return nxt
        q = nxt
    raise NumericalError("value iteration did not converge")


def telescoping_residual(mdp: TabularMdp, policy: DeterministicPolicy, q: np.ndarray) -> float:
    """Left minus right side of the evaluation-error identity

        E_{d0}[q(s, pi)] - J(pi) = E_{d_pi}[q(s,a) - r - gamma q(s', pi)] / (1 - gamma),

    which is zero for every policy and every table ``q``.
    """
    q = np.asarray(q, dtype=float)
    acts = policy.as_array()
    idx = np.arange(mdp.num_states)
    lhs = float(mdp.init_dist @ q[idx, acts]) - expected_return(mdp, policy)
    d = compute_occupancy(mdp, policy)
    td = q - mdp.reward - mdp.gamma * (mdp.transition @ q[idx, acts])
    rhs = float(np.sum(d * td)) / (1.0 - mdp.gamma)
    return lhs - rhs


def average_bellman_error(mdp: TabularMdp, policy: DeterministicPolicy, q: np.ndarray) -> float:
    """``E_{d_pi}[Tq - q]``."""
    d = compute_occupancy(mdp, policy)
    return float(np.sum(d * (bellman_optimality(mdp, q) - q)))


def performance_difference_bound(mdp: TabularMdp, policy: DeterministicPolicy, q: np.ndarray) -> float:
    """Upper bound on ``J(pi) - J(pi_q)`` via average Bellman errors under
    ``d_pi`` and ``d_{pi_q}``; holds for every policy and every ``q``."""
    pi_q = greedy_policy(q)
    return (average_bellman_error(mdp, policy, q) - average_bellman_error(mdp, pi_q, q)) / (1.0 - mdp.gamma)


def two_sided_bound(mdp: TabularMdp, q: np.ndarray, f: np.ndarray) -> float:
    """Bound on ``|J(pi_f) - J(pi_q)|``: twice the larger of the two one-sided
    telescoping bounds."""
    pi_f = greedy_policy(f)
    return 2.0 * max(performance_difference_bound(mdp, pi_f, q),
                     performance_difference_bound(mdp, greedy_policy(q), f))


def class_suboptimality_bound(mdp: TabularMdp, policies, q: np.ndarray) -> float:
    """``2 max_{pi in policies} |E_{d_pi}[Tq - q]| / (1 - gamma)``."""
    worst = max(abs(average_bellman_error(mdp, pi, q)) for pi in policies)
    return 2.0 * worst / (1.0 - mdp.gamma)
