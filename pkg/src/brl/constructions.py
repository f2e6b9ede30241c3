"""Builders for the counterexamples and low-rank weight-class constructions.

* ``chain_mdp``: uncontrolled chain where per-step concentrability is loose.
* ``two_state_counterexample``: data that never visits the absorbing state,
  on which FQI fails to control the Bellman error on mu.
* low-rank MDPs, barycentric-spanner row selection, and the two W-class
  constructions that make the weight approximation error vanish.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classes import LinearQClass, QClass, WClass
from .data import BatchDataset, DataDistribution, importance_weight, make_rng
from .mdp import DeterministicPolicy, TabularMdp, compute_occupancy, optimal_q, state_occupancy

RANK_TOL = 1e-8


def random_mdp(num_states: int, num_actions: int, gamma: float, seed: int, r_max: float = 1.0,
               sparsity: float = 0.0) -> TabularMdp:
    """Dirichlet transitions, uniform rewards in ``[0, r_max]``, Dirichlet ``d0``.

    ``sparsity`` zeroes that fraction of transition entries (keeping at least
    one successor per row).
    """
    rng = make_rng(seed)
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    if sparsity > 0:
        mask = rng.random(P.shape) >= sparsity
        mask[np.arange(num_states)[:, None], np.arange(num_actions)[None], P.argmax(axis=2)] = True
        P = P * mask
        P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(0.0, r_max, size=(num_states, num_actions))
    d0 = rng.dirichlet(np.ones(num_states))
    return TabularMdp(P, R, gamma, d0, r_max=r_max)


def small_gap_mdp(num_states: int, num_actions: int, gamma: float, seed: int,
                  gap: float = 0.2, base: float = 0.8) -> TabularMdp:
    """Alternating high/low state rewards with small action differences.

    Transitions are a 0.7/0.3 mix of a shared state row and an action-specific
    row, so actions differ little while state values spread by about ``base``.
    Rewards are ``base * (s % 2) + gap * U``; ``r_max = base + gap``.
    """
    rng = make_rng(seed)
    S, A = num_states, num_actions
    shared = rng.dirichlet(np.full(S, 0.3), size=S)
    own = rng.dirichlet(np.full(S, 0.3), size=(S, A))
    P = 0.7 * shared[:, None, :] + 0.3 * own
    R = base * (np.arange(S) % 2)[:, None] + gap * rng.random((S, A))
    return TabularMdp(P, R, gamma, np.full(S, 1.0 / S), r_max=base + gap)


def random_mu(num_states: int, num_actions: int, seed: int, floor: float = 0.05) -> DataDistribution:
    """Random fully supported distribution, mixed with uniform at weight ``floor``."""
    rng = make_rng(seed)
    raw = rng.dirichlet(np.ones(num_states * num_actions)).reshape(num_states, num_actions)
    mu = (1.0 - floor) * raw + floor / (num_states * num_actions)
    return DataDistribution(mu / mu.sum())


def chain_mdp(length: int, gamma: float) -> tuple[TabularMdp, DataDistribution]:
    """``L + 1`` states, one action, ``s_l -> s_{l+1}``, ``s_L`` absorbing, start at ``s_0``.

    Rewards are zero (``r_max`` is set to 1 so value classes are nontrivial);
    ``mu`` is the occupancy of the unique policy.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    S = length + 1
    P = np.zeros((S, 1, S))
    P[np.arange(length), 0, np.arange(1, S)] = 1.0
    P[length, 0, length] = 1.0
    d0 = np.zeros(S)
    d0[0] = 1.0
    mdp = TabularMdp(P, np.zeros((S, 1)), gamma, d0, r_max=1.0)
    mu = compute_occupancy(mdp, DeterministicPolicy((0,) * S))
    return mdp, DataDistribution(mu / mu.sum())


def two_state_counterexample(count: int = 100, gamma: float = 0.9) -> tuple[TabularMdp, BatchDataset]:
    """``s1 -> s2``, ``s2`` absorbing, one action, zero reward; data only from ``(s1, a)``.

    States are indexed ``s1 = 0``, ``s2 = 1``. ``r_max`` is 1 so ``V_max`` is positive.
    """
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    mdp = TabularMdp(P, np.zeros((2, 1)), gamma, np.array([1.0, 0.0]), r_max=1.0)
    data = BatchDataset(np.zeros(count), np.zeros(count), np.zeros(count), np.ones(count), gamma=gamma)
    return mdp, data


def contextual_bandit_mdp(num_states: int, gamma: float) -> tuple[TabularMdp, list[DeterministicPolicy]]:
    """Two actions; ``d0`` uniform on the first ``S - 1`` states, all of which move
    to the last (absorbing) state. Returns the MDP and the ``S - 1`` policies that
    take action 0 in exactly one context state and action 1 elsewhere."""
    S = num_states
    P = np.zeros((S, 2, S))
    P[:, :, S - 1] = 1.0
    d0 = np.zeros(S)
    d0[:S - 1] = 1.0 / (S - 1)
    R = np.zeros((S, 2))
    R[:S - 1, 0] = 1.0
    mdp = TabularMdp(P, R, gamma, d0, r_max=1.0)
    policies = []
    for i in range(S - 1):
        acts = [1] * S
        acts[i] = 0
        policies.append(DeterministicPolicy(tuple(acts)))
    return mdp, policies


@dataclass(frozen=True, eq=False)
class LowRankMdpSpec:
    """Transition factorization ``P = Phi @ P'`` with stochastic factors."""

    left_factor: np.ndarray   # (S*A, k)
    right_factor: np.ndarray  # (k, S)

    @property
    def latent_dim(self) -> int:
        return self.left_factor.shape[1]

    def transition(self, num_states: int, num_actions: int) -> np.ndarray:
        return (self.left_factor @ self.right_factor).reshape(num_states, num_actions, num_states)


def random_lowrank_mdp(num_states: int, num_actions: int, k: int, seed: int, gamma: float = 0.9,
                       r_max: float = 1.0) -> tuple[LowRankMdpSpec, TabularMdp]:
    """Rank-``k`` MDP from nonnegative stochastic factors (no projection needed)."""
    if not 1 <= k <= min(num_states * num_actions, num_states):
        raise ValueError("k must satisfy 1 <= k <= min(S*A, S)")
    rng = make_rng(seed)
    phi = rng.dirichlet(np.ones(k), size=num_states * num_actions)
    right = rng.dirichlet(np.ones(num_states), size=k)
    spec = LowRankMdpSpec(phi, right)
    P = spec.transition(num_states, num_actions)
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(0.0, r_max, size=(num_states, num_actions))
    d0 = rng.dirichlet(np.ones(num_states))
    return spec, TabularMdp(P, R, gamma, d0, r_max=r_max)


def numerical_rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    """Rank by pivoted Gram-Schmidt: count residual norms above ``tol`` (relative)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    scale = max(1.0, float(np.max(np.linalg.norm(M, axis=1))) if M.size else 1.0)
    R = M.copy()
    rank = 0
    for _ in range(min(M.shape)):
        norms = np.linalg.norm(R, axis=1)
        j = int(np.argmax(norms))
        if norms[j] <= tol * scale:
            break
        u = R[j] / norms[j]
        R = R - np.outer(R @ u, u)
        rank += 1
    return rank


def transition_rank(mdp: TabularMdp) -> int:
    S, A = mdp.shape
    return numerical_rank(mdp.transition.reshape(S * A, S))


def occupancy_matrix(mdp: TabularMdp, policies) -> np.ndarray:
    """Rows are state occupancies ``nu_pi``."""
    return np.stack([state_occupancy(mdp, pi) for pi in policies])


@dataclass
class SpannerSelection:
    """Rows chosen by (approximate) volume maximization.

    ``coefficients[i]`` reconstructs input row ``i`` from the selected rows.
    ``approximation_ratio`` is the largest coefficient magnitude; it is 1 when
    every row lies in the unit box spanned by the selection (the exact
    determinant-maximizer guarantee). ``rank_deficient`` is set when fewer rows
    than requested could be selected.
    """

    row_indices: list[int]
    coefficients: np.ndarray
    approximation_ratio: float
    residual: float
    rank_deficient: bool = False

    @property
    def size(self) -> int:
        return len(self.row_indices)

    def scaled_coefficients(self, k_prime: int | None = None) -> np.ndarray:
        """Coefficients against the rescaled rows ``k' * eta_j``; bounded by ``1/k'``."""
        k_prime = self.size if k_prime is None else k_prime
        return self.coefficients / k_prime


def _coefficients(rows: np.ndarray, selected: list[int]) -> tuple[np.ndarray, float]:
    basis = rows[selected]
    coef, *_ = np.linalg.lstsq(basis.T, rows.T, rcond=None)
    coef = coef.T
    residual = float(np.max(np.abs(coef @ basis - rows)))
    return coef, residual


def barycentric_select(rows: np.ndarray, target_dim: int, tol: float = RANK_TOL,
                       swap_factor: float = 1.0 + 1e-9, max_swaps: int = 10_000) -> SpannerSelection:
    """Greedy volume-maximizing row selection refined by single swaps.

    A swap of selected row ``j`` for input row ``i`` scales the selected
    submatrix volume by ``|coef[i, j]|``, so the refinement stops exactly when
    every coefficient magnitude is at most ``swap_factor``.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if target_dim < 1:
        raise ValueError("target_dim must be positive")
    scale = max(1.0, float(np.max(np.linalg.norm(rows, axis=1))))
    resid = rows.copy()
    selected: list[int] = []
    for _ in range(min(target_dim, rows.shape[0])):
        norms = np.linalg.norm(resid, axis=1)
        norms[selected] = -1.0
        j = int(np.argmax(norms))
        if norms[j] <= tol * scale:
            break
        selected.append(j)
        u = resid[j] / norms[j]
        resid = resid - np.outer(resid @ u, u)
    if not selected:
        raise ValueError("all rows are numerically zero")
    if numerical_rank(rows, tol) > len(selected):
        raise ValueError(f"rows have numerical rank above target_dim={target_dim}")

    coef, residual = _coefficients(rows, selected)
    for _ in range(max_swaps):
        i, j = np.unravel_index(np.argmax(np.abs(coef)), coef.shape)
        if abs(coef[i, j]) <= swap_factor:
            break
        selected[j] = int(i)
        coef, residual = _coefficients(rows, selected)
    return SpannerSelection(
        row_indices=[int(s) for s in selected],
        coefficients=coef,
        approximation_ratio=float(np.max(np.abs(coef))),
        residual=residual,
        rank_deficient=len(selected) < target_dim,
    )


def build_w_claim1(mdp: TabularMdp, mu: DataDistribution, q_class: QClass, k: int | None = None):
    """General low-rank case.

    Select ``k' = k + 1`` spanner rows ``eta_j`` of the state-occupancy stack,
    then ``W = {diag(mu)^-1 (k' eta_j x pi) : j, pi in Pi_Q}`` where
    ``(eta x pi)(s, a) = eta(s) 1[a = pi(s)]``. ``k`` defaults to the numerical
    rank of ``P``. Returns ``(W, selection)``.
    """
    policies = q_class.policies()
    k = transition_rank(mdp) if k is None else k
    M = occupancy_matrix(mdp, policies)
    sel = barycentric_select(M, k + 1)
    k_prime = k + 1
    members = []
    for j in sel.row_indices:
        eta = k_prime * M[j]
        for pi in policies:
            members.append(eta[:, None] * pi.onehot(mdp.num_actions) / mu.mu)
    return WClass(np.stack(members)), sel


def projected_weight_rows(mdp: TabularMdp, mu: DataDistribution, features: np.ndarray,
                          policies) -> np.ndarray:
    """Rows ``w_pi^T diag(mu) Phi+`` (one per policy)."""
    rows = []
    for pi in policies:
        w = importance_weight(mdp, pi, mu).reshape(-1)
        rows.append((w * mu.mu.reshape(-1)) @ features)
    return np.stack(rows)


def build_w_claim2(spec: LowRankMdpSpec, mdp: TabularMdp, mu: DataDistribution,
                   linear_q: LinearQClass, q_class: QClass | None = None):
    """Known-left-factor case: at most ``k + 1`` weights.

    Stacks the projected rows ``w_pi^T diag(mu) Phi+`` over ``Pi_Q``, selects
    spanner rows in that ``(k+1)``-dim space, and returns the selected true
    importance weights scaled by ``k'``. Returns ``(W, selection)``.
    """
    from .classes import linear_q_members

    if q_class is None:
        q_class = linear_q_members(linear_q, mdp)
    if linear_q.k != spec.latent_dim:
        raise ValueError("linear class feature dimension does not match the factorization")
    policies = q_class.policies()
    Z = projected_weight_rows(mdp, mu, linear_q.features, policies)
    k_prime = linear_q.k + 1
    sel = barycentric_select(Z, k_prime)
    members = [k_prime * importance_weight(mdp, policies[j], mu) for j in sel.row_indices]
    return WClass(np.stack(members)), sel


def theta_grid(k: int, values) -> np.ndarray:
    """Cartesian grid of coefficient vectors."""
    values = np.asarray(values, dtype=float)
    mesh = np.meshgrid(*([values] * k), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def perturbed_q_class(base: np.ndarray, size: int, scale: float, v_max: float, seed: int,
                      include_base: bool = True) -> QClass:
    """``base`` plus ``size`` uniformly perturbed copies, clipped to ``[0, v_max]``."""
    rng = make_rng(seed)
    members = [np.clip(base + rng.uniform(-scale, scale, size=base.shape), 0.0, v_max)
               for _ in range(size)]
    if include_base:
        members.insert(0, np.clip(base, 0.0, v_max))
    return QClass(np.stack(members), v_max)


def reward_shift_q_class(mdp: TabularMdp, size: int, scale: float, seed: int,
                         include_optimal: bool = True) -> QClass:
    """Optimal Q-functions of reward-perturbed copies of ``mdp``.

    Member ``j`` is ``Q*`` under rewards ``clip(R + U_j, 0, r_max)`` with
    ``U_j ~ Uniform[-scale, scale]``, so its Bellman residual under the true
    MDP is exactly ``R - clip(R + U_j)``. With ``include_optimal`` the true
    ``Q*`` is member 0, making the class realizable.
    """
    rng = make_rng(seed)
    members = [optimal_q(mdp)] if include_optimal else []
    while len(members) < size:
        shifted = np.clip(mdp.reward + rng.uniform(-scale, scale, size=mdp.shape), 0.0, mdp.r_max)
        twin = TabularMdp(mdp.transition, shifted, mdp.gamma, mdp.init_dist, r_max=mdp.r_max)
        members.append(optimal_q(twin))
    return QClass(np.stack(members), mdp.v_max)
