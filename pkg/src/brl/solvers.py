"""FQI, the squared-loss minimax algorithm (MSBO), the average-loss minimax
algorithm (MABO), and the certainty-equivalence reference.

Every argmin/argmax is exhaustive enumeration over the finite classes with
lowest-index tie-breaking. ``data`` may be a ``BatchDataset`` (empirical losses)
or a ``Population`` (exact losses); both expose ``sq_losses`` / ``avg_losses``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classes import QClass, WClass
from .data import BatchDataset, Population
from .mdp import TabularMdp, bellman_optimality, greedy_policy, policy_q, value_iteration

LossSource = BatchDataset | Population


@dataclass
class SolverResult:
    chosen_index: int
    chosen_q: np.ndarray
    objective_value: float
    inner_argmax_index: int | None = None
    objective_matrix: np.ndarray | None = field(default=None, repr=False)
    trace: list[dict] | None = None

    def to_dict(self) -> dict:
        return {
            "chosen_index": self.chosen_index,
            "objective": self.objective_value,
            "inner_argmax_index": self.inner_argmax_index,
            "trace": self.trace,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _check_source(data: LossSource) -> None:
    if isinstance(data, BatchDataset) and data.n == 0:
        raise ValueError("empty dataset")


def fqi(data: LossSource, q_class: QClass, iterations: int, init_index: int = 0) -> SolverResult:
    """``Q_t = argmin_{Q in class} l(Q; Q_{t-1})`` for a fixed number of iterations."""
    _check_source(data)
    if not 0 <= init_index < len(q_class):
        raise ValueError(f"init_index {init_index} outside class of size {len(q_class)}")
    if iterations < 1:
        raise ValueError("iterations must be positive")
    idx, loss = init_index, float("nan")
    trace = [{"iteration": 0, "index": idx, "loss": None}]
    for t in range(1, iterations + 1):
        losses = data.sq_losses(q_class.members, q_class[idx])
        idx = int(np.argmin(losses))
        loss = float(losses[idx])
        trace.append({"iteration": t, "index": idx, "loss": loss})
    return SolverResult(idx, q_class[idx].copy(), loss, trace=trace)


def msbo_objective_matrix(data: LossSource, q_class: QClass, f_class: QClass) -> np.ndarray:
    """``O[i, j] = l(Q_i; Q_i) - l(f_j; Q_i)``."""
    rows = []
    for q in q_class:
        # one call so that f == q yields a bit-identical loss and an exact-zero entry
        losses = data.sq_losses(np.concatenate([q[None], f_class.members]), q)
        rows.append(losses[0] - losses[1:])
    return np.array(rows)


def msbo(data: LossSource, q_class: QClass, f_class: QClass) -> SolverResult:
    """``argmin_Q max_f l(Q; Q) - l(f; Q)``."""
    _check_source(data)
    O = msbo_objective_matrix(data, q_class, f_class)
    inner = O.max(axis=1)
    i = int(np.argmin(inner))
    return SolverResult(i, q_class[i].copy(), float(inner[i]), int(np.argmax(O[i])), objective_matrix=O)


def mabo_objective_matrix(data: LossSource, q_class: QClass, w_class: WClass) -> np.ndarray:
    """``O[i, j] = |L(Q_i, w_j)|``."""
    return np.abs(data.avg_losses(q_class.members, w_class.members))


def mabo(data: LossSource, q_class: QClass, w_class: WClass) -> SolverResult:
    """``argmin_Q max_w |L(Q, w)|``."""
    _check_source(data)
    O = mabo_objective_matrix(data, q_class, w_class)
    inner = O.max(axis=1)
    i = int(np.argmin(inner))
    return SolverResult(i, q_class[i].copy(), float(inner[i]), int(np.argmax(O[i])), objective_matrix=O)


@dataclass
class CertaintyEquivalence:
    q: np.ndarray
    mdp: TabularMdp
    unobserved: list[tuple[int, int]]

    @property
    def complete(self) -> bool:
        return not self.unobserved


def empirical_mdp(data: BatchDataset, num_states: int, num_actions: int, gamma: float):
    """Frequency-estimated MDP. Unobserved pairs become reward-0 self-loops.

    Returns ``(mdp, unobserved)``.
    """
    counts = np.zeros((num_states, num_actions, num_states))
    np.add.at(counts, (data.s, data.a, data.s_next), 1.0)
    visits = counts.sum(axis=2)
    reward = np.zeros((num_states, num_actions))
    np.add.at(reward, (data.s, data.a), data.r)
    seen = visits > 0
    reward[seen] /= visits[seen]
    P = np.zeros_like(counts)
    P[seen] = counts[seen] / visits[seen][:, None]
    unobserved = [tuple(map(int, sa)) for sa in np.argwhere(~seen)]
    for s, a in unobserved:
        P[s, a, s] = 1.0
    r_max = max(float(reward.max()), 0.0)
    d0 = np.full(num_states, 1.0 / num_states)
    return TabularMdp(P, reward, gamma, d0, r_max=r_max), unobserved


def certainty_equivalence(data: BatchDataset, num_states: int, num_actions: int, gamma: float,
                          tol: float = 1e-12) -> CertaintyEquivalence:
    """Exact ``Q*`` of the empirical MDP.

    Value iteration to ``tol``, then one exact policy-evaluation solve of its
    greedy policy (kept only if its Bellman residual is smaller), which removes
    the residual value-iteration error.
    """
    model, unobserved = empirical_mdp(data, num_states, num_actions, gamma)
    q = value_iteration(model, tol=tol)
    polished = policy_q(model, greedy_policy(q))
    if _residual(model, polished) <= _residual(model, q):
        q = polished
    return CertaintyEquivalence(q, model, unobserved)


def _residual(mdp: TabularMdp, q: np.ndarray) -> float:
    return float(np.max(np.abs(bellman_optimality(mdp, q) - q)))
