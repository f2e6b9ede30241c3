"""Logging distribution, i.i.d. batch generation, and the squared / average losses.

``BatchDataset`` and ``Population`` expose the same two loss-matrix methods, so
the solvers run unchanged on sampled data or on exact population losses.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mdp import DeterministicPolicy, TabularMdp, bellman_optimality, compute_occupancy

DIST_SUM_TOL = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by an explicit 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))


@dataclass(frozen=True, eq=False)
class DataDistribution:
    """Fully supported distribution ``mu`` over state-action pairs."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 2:
            raise ValueError("mu must be an (S, A) table")
        if np.any(mu <= 0):
            raise ValueError("mu must be strictly positive on every (s, a) (full support)")
        if abs(mu.sum() - 1.0) > DIST_SUM_TOL:
            raise ValueError(f"mu must sum to 1, sums to {mu.sum()!r}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "DataDistribution":
        return cls(np.full((num_states, num_actions), 1.0 / (num_states * num_actions)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mu.shape


def _as_mu(mu) -> np.ndarray:
    return mu.mu if isinstance(mu, DataDistribution) else np.asarray(mu, dtype=float)


def sq_norm(x: np.ndarray, mu) -> float:
    """``||x||_{2,mu}^2``; ``mu`` may be a raw (possibly non-full-support) table."""
    return float(np.sum(_as_mu(mu) * np.asarray(x) ** 2))


def bellman_residual_sq(mdp: TabularMdp, q: np.ndarray, mu) -> float:
    """``||q - Tq||_{2,mu}^2``."""
    return sq_norm(np.asarray(q) - bellman_optimality(mdp, q), mu)


@dataclass(frozen=True, eq=False)
class BatchDataset:
    """i.i.d. ``(s, a, r, s')`` tuples stored column-wise."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    gamma: float
    seed: int | None = None

    def __post_init__(self):
        cols = [np.asarray(self.s, dtype=int), np.asarray(self.a, dtype=int),
                np.asarray(self.r, dtype=float), np.asarray(self.s_next, dtype=int)]
        if len({c.shape for c in cols}) != 1 or cols[0].ndim != 1:
            raise ValueError("dataset columns must be 1-d and of equal length")
        for name, col in zip(("s", "a", "r", "s_next"), cols):
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    @property
    def n(self) -> int:
        return len(self.s)

    def __len__(self) -> int:
        return self.n

    def tuples(self) -> list[tuple[int, int, float, int]]:
        return list(zip(self.s.tolist(), self.a.tolist(), self.r.tolist(), self.s_next.tolist()))

    def _require_nonempty(self):
        if self.n == 0:
            raise ValueError("empty dataset")

    def _targets(self, q_target: np.ndarray) -> np.ndarray:
        return self.r + self.gamma * np.max(q_target, axis=1)[self.s_next]

    def sq_losses(self, candidates: np.ndarray, q_target: np.ndarray) -> np.ndarray:
        """``l_D(f; q_target)`` for every ``f`` in ``candidates`` (shape ``(m, S, A)``)."""
        self._require_nonempty()
        y = self._targets(np.asarray(q_target, dtype=float))
        preds = np.asarray(candidates, dtype=float)[:, self.s, self.a]
        return np.mean((preds - y) ** 2, axis=1)

    def avg_losses(self, qs: np.ndarray, ws: np.ndarray) -> np.ndarray:
        """Matrix ``L_D(q_i, w_j)`` for ``qs`` of shape ``(m, S, A)`` and ``ws`` of shape ``(k, S, A)``."""
        self._require_nonempty()
        qs = np.asarray(qs, dtype=float)
        td = self.r + self.gamma * np.max(qs, axis=2)[:, self.s_next] - qs[:, self.s, self.a]
        wv = np.asarray(ws, dtype=float)[:, self.s, self.a]
        return td @ wv.T / self.n

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s", "a", "r", "s_next"])
            for row in self.tuples():
                writer.writerow([row[0], row[1], repr(row[2]), row[3]])

    @classmethod
    def from_csv(cls, path: str | Path, mdp: TabularMdp) -> "BatchDataset":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["s", "a", "r", "s_next"]:
                raise ValueError(f"expected header s,a,r,s_next, got {reader.fieldnames}")
            rows = [(int(x["s"]), int(x["a"]), float(x["r"]), int(x["s_next"])) for x in reader]
        S, A = mdp.shape
        for i, (s, a, _, s2) in enumerate(rows):
            if not (0 <= s < S and 0 <= a < A and 0 <= s2 < S):
                raise ValueError(f"row {i + 1}: index out of range for a {S}x{A} MDP")
        cols = list(zip(*rows)) if rows else [(), (), (), ()]
        return cls(*cols, gamma=mdp.gamma)


@dataclass(frozen=True, eq=False)
class Population:
    """Exact (infinite-data) counterpart of ``BatchDataset``."""

    mdp: TabularMdp
    mu: DataDistribution
    seed: int | None = field(default=None)

    @property
    def gamma(self) -> float:
        return self.mdp.gamma

    def sq_losses(self, candidates: np.ndarray, q_target: np.ndarray) -> np.ndarray:
        return np.array([population_sq_loss(self.mdp, self.mu, f, q_target) for f in np.asarray(candidates)])

    def avg_losses(self, qs: np.ndarray, ws: np.ndarray) -> np.ndarray:
        qs = np.asarray(qs, dtype=float)
        resid = np.stack([bellman_optimality(self.mdp, q) - q for q in qs])
        c = self.mu.mu[None] * resid
        return np.einsum("msa,ksa->mk", c, np.asarray(ws, dtype=float))


def generate_batch(mdp: TabularMdp, mu: DataDistribution, n: int, seed: int) -> BatchDataset:
    """Draw ``(s, a) ~ mu``, ``r = R(s, a)``, ``s' ~ P(.|s, a)``; deterministic in ``seed``."""
    if not isinstance(mu, DataDistribution):
        mu = DataDistribution(mu)
    if n < 1:
        raise ValueError("n must be positive")
    if mu.shape != mdp.shape:
        raise ValueError(f"mu shape {mu.shape} does not match MDP {mdp.shape}")
    rng = make_rng(seed)
    S, A = mdp.shape
    flat = rng.choice(S * A, size=n, p=mu.mu.ravel())
    s, a = np.divmod(flat, A)
    cdf = np.cumsum(mdp.transition[s, a], axis=1)
    u = rng.random(n)
    s_next = np.minimum((u[:, None] >= cdf).sum(axis=1), S - 1)
    # guard the float tail of the cdf: never land on a zero-probability state
    bad = mdp.transition[s, a, s_next] == 0
    if np.any(bad):
        s_next[bad] = np.argmax(mdp.transition[s[bad], a[bad]] > 0, axis=1)
    return BatchDataset(s, a, mdp.reward[s, a], s_next, gamma=mdp.gamma, seed=seed)


def importance_weight(mdp: TabularMdp, policy: DeterministicPolicy, mu: DataDistribution) -> np.ndarray:
    """``w_{d_pi/mu} = d_pi / mu``."""
    return compute_occupancy(mdp, policy) / mu.mu


def empirical_sq_loss(data: BatchDataset, q: np.ndarray, q_target: np.ndarray) -> float:
    return float(data.sq_losses(np.asarray(q)[None], q_target)[0])


def population_sq_loss(mdp: TabularMdp, mu: DataDistribution, q: np.ndarray, q_target: np.ndarray) -> float:
    """Exact ``E_mu[(q - r - gamma max q_target(s', .))^2]``, split as squared
    distance to the backup mean plus the conditional-variance (over-estimation) term."""
    v = np.max(np.asarray(q_target, dtype=float), axis=1)
    mean_next = mdp.transition @ v
    var_next = mdp.transition @ v ** 2 - mean_next ** 2
    backup = mdp.reward + mdp.gamma * mean_next
    bias = np.sum(mu.mu * (np.asarray(q) - backup) ** 2)
    variance = mdp.gamma ** 2 * np.sum(mu.mu * np.maximum(var_next, 0.0))
    return float(bias + variance)


def conditional_variance_term(mdp: TabularMdp, mu: DataDistribution, q_target: np.ndarray) -> float:
    """``gamma^2 E_mu[Var_{s'}(max_a' q_target(s', a'))]``."""
    v = np.max(np.asarray(q_target, dtype=float), axis=1)
    mean_next = mdp.transition @ v
    var_next = mdp.transition @ v ** 2 - mean_next ** 2
    return float(mdp.gamma ** 2 * np.sum(mu.mu * np.maximum(var_next, 0.0)))


def empirical_avg_loss(data: BatchDataset, q: np.ndarray, w: np.ndarray) -> float:
    return float(data.avg_losses(np.asarray(q)[None], np.asarray(w)[None])[0, 0])


def population_avg_loss(mdp: TabularMdp, mu: DataDistribution, q: np.ndarray, w: np.ndarray) -> float:
    """``L_mu(q, w) = E_mu[w (Tq - q)]``."""
    q = np.asarray(q, dtype=float)
    return float(np.sum(mu.mu * np.asarray(w) * (bellman_optimality(mdp, q) - q)))
