"""Closed-form evaluation of every quantity in the two minimax error bounds.

Policy classes are the deduplicated greedy policies of a Q-class
(``QClass.policies``). All quantities are exact population values; the only
sample-size dependence is in the statistical terms of the bound evaluators.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .classes import QClass, WClass, check_span_coefficients
from .data import DataDistribution, bellman_residual_sq, importance_weight, sq_norm
from .lp import solve_lp
from .mdp import (
    DeterministicPolicy,
    TabularMdp,
    bellman_optimality,
    compute_step_marginal,
    expected_return,
    greedy_policy,
)


def _weights(mdp: TabularMdp, mu: DataDistribution, policies) -> list[np.ndarray]:
    return [importance_weight(mdp, pi, mu) for pi in policies]


def c_eff(mdp: TabularMdp, mu: DataDistribution, q_class: QClass) -> float:
    """``max_{pi in Pi_Q} ||w_{d_pi/mu}||_{2,mu}^2``."""
    return max(sq_norm(w, mu) for w in _weights(mdp, mu, q_class.policies()))


def c_inf(mdp: TabularMdp, mu: DataDistribution, q_class: QClass) -> float:
    return max(float(np.max(np.abs(w))) for w in _weights(mdp, mu, q_class.policies()))


def importance_w_class(mdp: TabularMdp, mu: DataDistribution, q_class: QClass) -> WClass:
    """``{w_{d_pi/mu} : pi in Pi_Q}``, the class that realizes every target weight."""
    return WClass(np.stack(_weights(mdp, mu, q_class.policies())))


def per_step_coefficients(mdp: TabularMdp, mu: DataDistribution,
                          policies: Sequence[DeterministicPolicy], t_max: int) -> list[float]:
    """``C_t = max_pi ||d_{pi,t} / mu||_inf`` for ``t = 0..t_max`` (stationary policies)."""
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    out = []
    for t in range(t_max + 1):
        out.append(max(float(np.max(compute_step_marginal(mdp, pi, t) / mu.mu)) for pi in policies))
    return out


def default_beta(gamma: float, t_max: int) -> np.ndarray:
    """``(1 - gamma) gamma^t`` truncated at ``t_max`` and renormalized."""
    beta = (1.0 - gamma) * gamma ** np.arange(t_max + 1)
    return beta / beta.sum()


def per_step_combined(per_step: Sequence[float], beta: Sequence[float] | None = None,
                      gamma: float | None = None) -> float:
    """``sum_t beta(t) C_t``. Without ``beta`` the default geometric weights need ``gamma``."""
    C = np.asarray(per_step, dtype=float)
    if beta is None:
        if gamma is None:
            raise ValueError("default beta needs gamma")
        beta = default_beta(gamma, len(C) - 1)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != C.shape:
        raise ValueError("beta and per_step lengths differ")
    if np.any(beta < 0):
        raise ValueError("beta must be nonnegative")
    if beta.sum() <= 0:
        raise ValueError("beta must have positive mass")
    return float(C @ (beta / beta.sum()))


def c_w_coefficients(w_class: WClass, mu: DataDistribution) -> tuple[float, float]:
    """``(max_w ||w||_{2,mu}^2, max_w ||w||_inf)``."""
    sq = max(sq_norm(w, mu) for w in w_class)
    sup = max(float(np.max(np.abs(w))) for w in w_class)
    return sq, sup


def bellman_residuals(mdp: TabularMdp, q_class: QClass) -> np.ndarray:
    """Stack of ``Tq - q`` for every member."""
    return np.stack([bellman_optimality(mdp, q) - q for q in q_class])


def eps_q_sq(mdp: TabularMdp, mu: DataDistribution, q_class: QClass) -> float:
    """``min_Q ||Q - TQ||_{2,mu}^2``."""
    return min(bellman_residual_sq(mdp, q, mu) for q in q_class)


def eps_qf_sq(mdp: TabularMdp, mu: DataDistribution, q_class: QClass, f_class: QClass) -> float:
    """``max_Q min_f ||f - TQ||_{2,mu}^2``."""
    F = f_class.members
    worst = 0.0
    for q in q_class:
        tq = bellman_optimality(mdp, q)
        worst = max(worst, float(np.min(np.sum(mu.mu * (F - tq) ** 2, axis=(1, 2)))))
    return worst


def eps_q_avg(mdp: TabularMdp, mu: DataDistribution, q_class: QClass, w_class: WClass) -> float:
    """``min_Q max_w |E_mu[w (TQ - Q)]|``."""
    c = mu.mu[None] * bellman_residuals(mdp, q_class)
    L = np.einsum("msa,ksa->mk", c, w_class.members)
    return float(np.min(np.max(np.abs(L), axis=1)))


def eps_w_lp(mdp: TabularMdp, mu: DataDistribution, q_class: QClass, w_class: WClass,
             policy: DeterministicPolicy) -> tuple[float, np.ndarray]:
    """``inf_{w in span(W)} max_Q |E_mu[(w_pi - w)(TQ - Q)]|`` for one policy.

    Linear program over ``(alpha+, alpha-, t) >= 0``: minimize ``t`` subject to
    ``|g_Q - sum_i alpha_i h_{Q,i}| <= t`` for each Q and
    ``sum alpha+ + sum alpha- <= 1``, with ``g_Q = <c_Q, w_pi>``,
    ``h_{Q,i} = <c_Q, w_i>`` and ``c_Q = mu (TQ - Q)``.
    Returns the optimum and the optimal coefficients.
    """
    c = mu.mu[None] * bellman_residuals(mdp, q_class)
    target = importance_weight(mdp, policy, mu)
    g = np.einsum("msa,sa->m", c, target)
    H = np.einsum("msa,ksa->mk", c, w_class.members)
    scale = max(np.abs(g).max(), np.abs(H).max())
    if scale == 0.0:
        return 0.0, np.zeros(len(w_class))
    g, H = g / scale, H / scale
    m, k = H.shape
    ones = np.ones((m, 1))
    A = np.vstack([
        np.hstack([-H, H, -ones]),     # g - H a <= t
        np.hstack([H, -H, -ones]),     # H a - g <= t
        np.concatenate([np.ones(2 * k), [0.0]])[None],
    ])
    b = np.concatenate([-g, g, [1.0]])
    cost = np.zeros(2 * k + 1)
    cost[-1] = 1.0
    res = solve_lp(cost, A, b)
    alpha = res.x[:k] - res.x[k:2 * k]
    # shave round-off off the l1 budget so the coefficients validate
    l1 = np.sum(np.abs(alpha))
    if l1 > 1.0:
        alpha = alpha / l1
    alpha = check_span_coefficients(alpha, k)
    value = float(np.max(np.abs(g - H @ alpha))) * scale
    return value, alpha


def eps_w(mdp: TabularMdp, mu: DataDistribution, q_class: QClass, w_class: WClass) -> float:
    """``max_{pi in Pi_Q}`` of ``eps_w_lp``."""
    return max(eps_w_lp(mdp, mu, q_class, w_class, pi)[0] for pi in q_class.policies())


def eps_stat(c_eff_w: float, c_inf_w: float, v_max: float, n: int, delta: float,
             q_size: int, w_size: int) -> float:
    """Bernstein + union-bound deviation term of the average-loss bound."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    log_term = math.log(2.0 * q_size * w_size / delta)
    return (2.0 * v_max * math.sqrt(2.0 * c_eff_w * log_term / n)
            + 4.0 * c_inf_w * v_max * log_term / (3.0 * n))


def thm3_rhs(c_eff_value: float, eps_q_sq_value: float, eps_qf_sq_value: float, gamma: float,
             v_max: float, q_size: int, f_size: int, n: int | None, delta: float) -> float:
    """Explicit-constant right-hand side of the squared-loss minimax bound.

    ``n=None`` is the population limit: only the approximation terms remain.
    """
    lead = 2.0 * math.sqrt(c_eff_value) / (1.0 - gamma)
    approx = math.sqrt(2.0 * eps_q_sq_value) + math.sqrt(2.0 * eps_qf_sq_value)
    if n is None:
        return lead * approx
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    v2 = v_max ** 2
    log_q = math.log(2.0 * q_size / delta)
    log_qf = math.log(8.0 * q_size * f_size / delta)
    fast = math.sqrt(24.0 * v2 * log_q / n) + math.sqrt(172.0 * v2 * log_qf / n)
    slow = ((32.0 * v2 * log_q / n * eps_q_sq_value) ** 0.25
            + (3824.0 * v2 * log_qf / n * eps_qf_sq_value) ** 0.25)
    return lead * (approx + fast + slow)


def thm5_rhs(eps_q_avg_value: float, eps_w_value: float, eps_stat_value: float, gamma: float) -> float:
    return 2.0 * (eps_q_avg_value + eps_w_value + eps_stat_value) / (1.0 - gamma)


def thm_rhs(components: dict, gamma: float) -> tuple[float, float]:
    """Both right-hand sides from a dict of precomputed components."""
    needed = ["c_eff", "eps_q_sq", "eps_qf_sq", "v_max", "q_size", "f_size", "n", "delta",
              "eps_q_avg", "eps_w", "eps_stat"]
    missing = [k for k in needed if k not in components]
    if missing:
        raise KeyError(f"missing bound components: {missing}")
    c = components
    t3 = thm3_rhs(c["c_eff"], c["eps_q_sq"], c["eps_qf_sq"], gamma, c["v_max"],
                  c["q_size"], c["f_size"], c["n"], c["delta"])
    t5 = thm5_rhs(c["eps_q_avg"], c["eps_w"], c["eps_stat"], gamma)
    return t3, t5


def bellman_error_bound(c_eff_value: float, residual_sq: float, gamma: float) -> float:
    """``2 sqrt(C_eff) ||Q - TQ||_{2,mu} / (1 - gamma)``."""
    return 2.0 * math.sqrt(c_eff_value * residual_sq) / (1.0 - gamma)


def suboptimality(mdp: TabularMdp, q_class: QClass, chosen_q: np.ndarray) -> float:
    """``max_{pi in Pi_Q} J(pi) - J(pi_{chosen})``."""
    best = max(expected_return(mdp, pi) for pi in q_class.policies())
    return max(0.0, best - expected_return(mdp, greedy_policy(chosen_q)))


@dataclass
class BoundReport:
    c_eff: float
    c_inf: float
    per_step: list[float]
    c_ps: float
    c_eff_w: float
    c_inf_w: float
    eps_q_sq: float
    eps_qf_sq: float
    eps_q_avg: float
    eps_w: float
    eps_stat: float
    thm3_rhs: float
    thm5_rhs: float
    delta: float
    n: int | None
    suboptimality: float
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        """Flat record with stable field order; ``extra`` keys come first."""
        out = dict(self.extra)
        for f in fields(self):
            if f.name != "extra":
                out[f.name] = getattr(self, f.name)
        return out


REPORT_FIELDS = [f.name for f in fields(BoundReport) if f.name != "extra"]


def bound_report(mdp: TabularMdp, mu: DataDistribution, q_class: QClass, f_class: QClass,
                 w_class: WClass, chosen_q: np.ndarray, n: int | None, delta: float,
                 t_max: int = 100, extra: dict | None = None) -> BoundReport:
    """Evaluate every bound component; ``n=None`` means population mode (no statistical terms)."""
    policies = q_class.policies()
    ce, ci = c_eff(mdp, mu, q_class), c_inf(mdp, mu, q_class)
    per_step = per_step_coefficients(mdp, mu, policies, t_max)
    c_ps = per_step_combined(per_step, gamma=mdp.gamma)
    cew, ciw = c_w_coefficients(w_class, mu)
    e_sq, e_qf = eps_q_sq(mdp, mu, q_class), eps_qf_sq(mdp, mu, q_class, f_class)
    e_avg, e_w = eps_q_avg(mdp, mu, q_class, w_class), eps_w(mdp, mu, q_class, w_class)
    e_stat = 0.0 if n is None else eps_stat(cew, ciw, mdp.v_max, n, delta, len(q_class), len(w_class))
    t3 = thm3_rhs(ce, e_sq, e_qf, mdp.gamma, mdp.v_max, len(q_class), len(f_class), n, delta)
    t5 = thm5_rhs(e_avg, e_w, e_stat, mdp.gamma)
    return BoundReport(
        c_eff=ce, c_inf=ci, per_step=per_step, c_ps=c_ps, c_eff_w=cew, c_inf_w=ciw,
        eps_q_sq=e_sq, eps_qf_sq=e_qf, eps_q_avg=e_avg, eps_w=e_w, eps_stat=e_stat,
        thm3_rhs=t3, thm5_rhs=t5, delta=delta, n=n,
        suboptimality=suboptimality(mdp, q_class, chosen_q), extra=dict(extra or {}),
    )


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value) if not math.isfinite(value) else f"{value:.17g}"
    if isinstance(value, (list, tuple)):
        return json.dumps([float(f"{v:.17g}") for v in value])
    return "" if value is None else str(value)


def format_reports(rows: Sequence[dict], fmt: str = "csv", header: bool = True) -> str:
    """Render report rows as CSV (17 significant digits) or JSON lines."""
    if fmt == "json":
        return "".join(json.dumps(r) + "\n" for r in rows)
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    if not rows:
        return ""
    keys = list(rows[0].keys())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(keys)
    for r in rows:
        writer.writerow([_fmt(r.get(h)) for h in keys])
    return buf.getvalue()


def write_reports(rows: Sequence[dict], path: str | Path, fmt: str = "csv", append: bool = False) -> None:
    """Write (or append) report rows; a CSV header is written only to a new or empty file."""
    path = Path(path)
    header = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w", newline="") as fh:
        fh.write(format_reports(rows, fmt, header=header))


def report_to_json(report: BoundReport) -> str:
    return json.dumps(asdict(report))
