"""Finite Q-, F- and W-classes, linear-feature Q-classes, and span(W) queries.

span(W) (unit-l1 combinations of W) is never materialized: the supremum of any
linear functional over it is attained at a signed vertex, so every span query
reduces to a max over members.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataDistribution, make_rng
from .mdp import DeterministicPolicy, TabularMdp, greedy_policy

RANGE_TOL = 1e-12
L1_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class QClass:
    """Finite class of ``(S, A)`` tables with entries in ``[0, v_max]``.

    Also used for the helper class F of the squared-loss minimax algorithm.
    """

    members: np.ndarray
    v_max: float

    def __post_init__(self):
        m = np.array(self.members, dtype=float)
        if m.ndim != 3 or m.shape[0] == 0:
            raise ValueError("members must be a nonempty (m, S, A) stack")
        if not np.all(np.isfinite(m)):
            raise ValueError("class members must be finite")
        if m.min() < -RANGE_TOL or m.max() > self.v_max + RANGE_TOL * max(1.0, self.v_max):
            raise ValueError(f"class members must lie in [0, {self.v_max}]")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)
        object.__setattr__(self, "v_max", float(self.v_max))

    def __len__(self) -> int:
        return self.members.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.members[i]

    def __iter__(self):
        return iter(self.members)

    @property
    def shape(self) -> tuple[int, int]:
        return self.members.shape[1:]

    def policies(self) -> list[DeterministicPolicy]:
        """Greedy policy class, deduplicated by action table, in first-seen order."""
        return list(dict.fromkeys(greedy_policy(q) for q in self.members))


@dataclass(frozen=True, eq=False)
class WClass:
    """Finite class of real-valued weight tables (entries may be negative)."""

    members: np.ndarray

    def __post_init__(self):
        m = np.array(self.members, dtype=float)
        if m.ndim != 3 or m.shape[0] == 0:
            raise ValueError("members must be a nonempty (k, S, A) stack")
        if not np.all(np.isfinite(m)):
            raise ValueError("weight functions must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    def __len__(self) -> int:
        return self.members.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.members[i]

    def __iter__(self):
        return iter(self.members)

    def scaled(self, c: float) -> "WClass":
        return WClass(c * self.members)


def check_span_coefficients(alpha, size: int) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (size,):
        raise ValueError(f"expected {size} coefficients, got shape {alpha.shape}")
    if np.sum(np.abs(alpha)) > 1.0 + L1_TOL:
        raise ValueError(f"coefficients have l1 norm {np.sum(np.abs(alpha))} > 1")
    return alpha


def span_evaluate(w_class: WClass, alpha) -> np.ndarray:
    alpha = check_span_coefficients(alpha, len(w_class))
    return np.tensordot(alpha, w_class.members, axes=1)


def span_max_abs(w_class: WClass, functional: np.ndarray) -> float:
    """``max_{w in span(W)} |<c, w>|``, attained at a vertex ``+-w_i``."""
    vals = np.tensordot(w_class.members, np.asarray(functional, dtype=float), axes=([1, 2], [0, 1]))
    return float(np.max(np.abs(vals)))


def indicator_w_class(num_states: int, num_actions: int, mu: DataDistribution | None = None,
                      scaled: bool = False) -> WClass:
    """One indicator per ``(s*, a*)``; divided by ``mu(s*, a*)`` when ``scaled``."""
    k = num_states * num_actions
    members = np.eye(k).reshape(k, num_states, num_actions)
    if scaled:
        if mu is None:
            raise ValueError("scaled indicators need mu")
        members = members / mu.mu.reshape(k, 1, 1)
    return WClass(members)


def grid_q_class(num_states: int, num_actions: int, values, v_max: float,
                 seed: int | None = None) -> QClass:
    """Every table with entries drawn from ``values`` (full Cartesian product).

    With ``seed`` the member order is shuffled. Solvers break ties by lowest
    index, so the shuffle is what makes otherwise-arbitrary choices vary.
    """
    values = np.asarray(values, dtype=float)
    cells = num_states * num_actions
    if len(values) ** cells > 2_000_000:
        raise ValueError("grid class too large to enumerate")
    members = np.array(list(itertools.product(values, repeat=cells))).reshape(-1, num_states, num_actions)
    if seed is not None:
        members = members[make_rng(seed).permutation(len(members))]
    return QClass(members, v_max)


@dataclass(frozen=True, eq=False)
class LinearQClass:
    """``Q(s, a) = R(s, a) + gamma phi(s, a)^T theta`` over a finite set of thetas.

    ``features`` is ``Phi+ = [Phi R]`` with shape ``(S*A, k+1)``; the last
    column must be the reward vector.
    """

    features: np.ndarray
    theta_set: np.ndarray

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        thetas = np.atleast_2d(np.array(self.theta_set, dtype=float))
        if feats.ndim != 2 or feats.shape[1] < 2:
            raise ValueError("features must be (S*A, k+1) with k >= 1")
        if thetas.shape[1] != feats.shape[1] - 1:
            raise ValueError(f"theta dimension {thetas.shape[1]} != k = {feats.shape[1] - 1}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "theta_set", thetas)

    @property
    def k(self) -> int:
        return self.features.shape[1] - 1

    @property
    def phi(self) -> np.ndarray:
        return self.features[:, :-1]

    @classmethod
    def from_factor(cls, phi: np.ndarray, mdp: TabularMdp, theta_set) -> "LinearQClass":
        return cls(np.column_stack([phi, mdp.reward.reshape(-1)]), theta_set)

    def augmented_coefficients(self, gamma: float) -> np.ndarray:
        """Rows ``[gamma theta, 1]`` so that members are ``Phi+ @ row``."""
        return np.column_stack([gamma * self.theta_set, np.ones(len(self.theta_set))])


def linear_q_members(cls: LinearQClass, mdp: TabularMdp, return_thetas: bool = False):
    """Materialize the linear class, dropping thetas whose Q leaves ``[0, V_max]``."""
    S, A = mdp.shape
    if cls.features.shape[0] != S * A:
        raise ValueError(f"features have {cls.features.shape[0]} rows, MDP has {S * A} pairs")
    if not np.allclose(cls.features[:, -1], mdp.reward.reshape(-1), rtol=0, atol=1e-12):
        raise ValueError("last feature column must equal the reward vector")
    flat = cls.augmented_coefficients(mdp.gamma) @ cls.features.T
    vmax = mdp.v_max
    keep = np.all((flat >= -RANGE_TOL) & (flat <= vmax + RANGE_TOL * max(1.0, vmax)), axis=1)
    if not np.any(keep):
        raise ValueError("no theta yields a Q-function inside [0, V_max]")
    q_class = QClass(np.clip(flat[keep], 0.0, vmax).reshape(-1, S, A), vmax)
    return (q_class, cls.theta_set[keep]) if return_thetas else q_class


def class_from_dict(spec: dict, mdp: TabularMdp, mu: DataDistribution | None = None,
                    kind: str = "q"):
    """Build a class from the JSON class format.

    Explicit form: ``{"members": [...tables...]}``. Generator form:
    ``{"type": "indicator", "scaled": bool}``, ``{"type": "linear", "features": ..., "thetas": ...}``
    or ``{"type": "grid", "values": [...], "seed": int}``.
    """
    S, A = mdp.shape
    if "members" in spec:
        members = np.asarray(spec["members"], dtype=float)
        return QClass(members, mdp.v_max) if kind == "q" else WClass(members)
    kind_type = spec.get("type")
    if kind_type == "indicator":
        return indicator_w_class(S, A, mu, scaled=bool(spec.get("scaled", False)))
    if kind_type == "linear":
        return linear_q_members(LinearQClass(spec["features"], spec["thetas"]), mdp)
    if kind_type == "grid":
        return grid_q_class(S, A, spec["values"], mdp.v_max, seed=spec.get("seed"))
    raise ValueError(f"unknown class generator type {kind_type!r}")


def load_class(path: str | Path, mdp: TabularMdp, mu: DataDistribution | None = None, kind: str = "q"):
    return class_from_dict(json.loads(Path(path).read_text()), mdp, mu, kind)


def class_to_dict(cls: QClass | WClass) -> dict:
    return {"members": cls.members.tolist()}
