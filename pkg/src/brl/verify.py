"""Invariant suites behind ``brl verify``.

Each suite takes a seed and returns a list of ``Check`` records. A check
passes when its measured value is on the right side of its threshold; the
direction is stored with the check so reports are self-describing.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .classes import LinearQClass, QClass, WClass, indicator_w_class, linear_q_members, span_max_abs
from .constructions import (
    build_w_claim1,
    build_w_claim2,
    chain_mdp,
    contextual_bandit_mdp,
    numerical_rank,
    perturbed_q_class,
    random_lowrank_mdp,
    random_mdp,
    random_mu,
    reward_shift_q_class,
    small_gap_mdp,
    theta_grid,
    transition_rank,
)
from .data import DataDistribution, Population, bellman_residual_sq, generate_batch, make_rng
from .diagnostics import (
    bellman_error_bound,
    c_eff,
    c_inf,
    eps_q_avg,
    eps_q_sq,
    eps_w,
    importance_w_class,
    per_step_coefficients,
    per_step_combined,
    suboptimality,
    thm5_rhs,
    bound_report,
)
from .mdp import (
    DeterministicPolicy,
    TabularMdp,
    compute_occupancy,
    expected_return,
    greedy_policy,
    optimal_q,
    performance_difference_bound,
    class_suboptimality_bound,
    telescoping_residual,
    two_sided_bound,
)
from .solvers import certainty_equivalence, fqi, mabo, msbo

SUITES = ("telescoping", "bounds", "counterexamples", "lowrank", "span", "rates")


@dataclass
class Check:
    check_name: str
    status: str
    measured: float
    threshold: float
    direction: str = "<="

    @classmethod
    def make(cls, name: str, measured: float, threshold: float, direction: str = "<=") -> "Check":
        measured = float(measured)
        ok = measured <= threshold if direction == "<=" else measured >= threshold
        return cls(name, "pass" if ok else "fail", measured, float(threshold), direction)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return asdict(self)


def _random_instance(rng: np.random.Generator, max_states: int = 10, max_actions: int = 4,
                     gammas=(0.5, 0.9, 0.99)) -> TabularMdp:
    S = int(rng.integers(1, max_states + 1))
    A = int(rng.integers(1, max_actions + 1))
    gamma = float(rng.choice(gammas))
    return random_mdp(S, A, gamma, seed=int(rng.integers(2**62)))


def _random_policy(rng: np.random.Generator, mdp: TabularMdp) -> DeterministicPolicy:
    return DeterministicPolicy(tuple(int(a) for a in rng.integers(mdp.num_actions, size=mdp.num_states)))


def _random_q(rng: np.random.Generator, mdp: TabularMdp) -> np.ndarray:
    return rng.uniform(0.0, mdp.v_max, size=mdp.shape)


# ---------------------------------------------------------------- telescoping

def telescoping_checks(seed: int, trials: int = 100) -> list[Check]:
    """Evaluation-error identity plus the three performance-difference inequalities."""
    rng = make_rng(seed)
    start = time.perf_counter()
    worst_identity = 0.0
    worst_pd = worst_two = worst_class = -np.inf
    for _ in range(trials):
        mdp = _random_instance(rng)
        pi = _random_policy(rng, mdp)
        q, f = _random_q(rng, mdp), _random_q(rng, mdp)
        worst_identity = max(worst_identity, abs(telescoping_residual(mdp, pi, q)))

        gap = expected_return(mdp, pi) - expected_return(mdp, greedy_policy(q))
        worst_pd = max(worst_pd, gap - performance_difference_bound(mdp, pi, q))

        diff = abs(expected_return(mdp, greedy_policy(f)) - expected_return(mdp, greedy_policy(q)))
        worst_two = max(worst_two, diff - two_sided_bound(mdp, q, f))

        members = np.stack([q] + [_random_q(rng, mdp) for _ in range(int(rng.integers(1, 6)))])
        policies = QClass(members, mdp.v_max).policies()
        best = max(expected_return(mdp, p) for p in policies)
        loss = best - expected_return(mdp, greedy_policy(q))
        worst_class = max(worst_class, loss - class_suboptimality_bound(mdp, policies, q))
    elapsed = time.perf_counter() - start
    return [
        Check.make("telescoping_identity_max_abs_residual", worst_identity, 1e-9),
        Check.make("performance_difference_max_violation", worst_pd, 1e-9),
        Check.make("two_sided_bound_max_violation", worst_two, 1e-9),
        Check.make("class_bound_max_violation", worst_class, 1e-9),
        Check.make("telescoping_runtime_seconds", elapsed, 5.0),
    ]


# --------------------------------------------------------------------- bounds

def certainty_equivalence_checks(seed: int, trials: int = 20, n: int = 2000,
                                 class_size: int = 15) -> list[Check]:
    """mabo with scaled indicators selects the C-E solution with zero objective."""
    rng = make_rng(seed)
    worst_obj, selected = 0.0, 0
    for t in range(trials):
        S, A = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        mdp = random_mdp(S, A, float(rng.choice([0.5, 0.9])), seed=int(rng.integers(2**62)))
        mu = random_mu(S, A, seed=int(rng.integers(2**62)), floor=0.5)
        while True:
            data = generate_batch(mdp, mu, n, seed=int(rng.integers(2**62)))
            ce = certainty_equivalence(data, S, A, mdp.gamma)
            if ce.complete:
                break
        q_ce = np.clip(ce.q, 0.0, mdp.v_max)
        others = perturbed_q_class(q_ce, class_size - 1, 0.1 * mdp.v_max, mdp.v_max,
                                   seed=int(rng.integers(2**62)), include_base=False).members
        pos = int(rng.integers(class_size))
        members = np.insert(others, pos, q_ce, axis=0)
        q_class = QClass(members, mdp.v_max)
        W = indicator_w_class(S, A, mu, scaled=True)
        res = mabo(data, q_class, W)
        worst_obj = max(worst_obj, float(res.objective_matrix[pos].max()))
        selected += int(res.chosen_index == pos)
    return [
        Check.make("ce_member_max_objective", worst_obj, 1e-10),
        Check.make("ce_member_selected_count", selected, trials, ">="),
    ]


def _bound_instance(rng: np.random.Generator):
    S, A = int(rng.integers(2, 6)), int(rng.integers(2, 4))
    mdp = random_mdp(S, A, float(rng.choice([0.5, 0.9])), seed=int(rng.integers(2**62)))
    mu = random_mu(S, A, seed=int(rng.integers(2**62)), floor=0.3)
    q_class = reward_shift_q_class(mdp, 12, 0.2, seed=int(rng.integers(2**62)),
                                   include_optimal=bool(rng.integers(2)))
    return mdp, mu, q_class


def thm5_checks(seed: int, trials: int = 50, n: int = 2000, delta: float = 0.05) -> list[Check]:
    """Average-loss bound: empirical runs (w.p. 1 - delta) and population runs (always)."""
    rng = make_rng(seed)
    held_emp = held_pop = 0
    worst_pop = -np.inf
    for _ in range(trials):
        mdp, mu, q_class = _bound_instance(rng)
        W = indicator_w_class(*mdp.shape, mu, scaled=True)
        data = generate_batch(mdp, mu, n, seed=int(rng.integers(2**62)))
        chosen = mabo(data, q_class, W).chosen_q
        rep = bound_report(mdp, mu, q_class, q_class, W, chosen, n, delta, t_max=0)
        held_emp += int(rep.suboptimality <= rep.thm5_rhs)

        pop_q = mabo(Population(mdp, mu), q_class, W).chosen_q
        sub = suboptimality(mdp, q_class, pop_q)
        rhs = thm5_rhs(eps_q_avg(mdp, mu, q_class, W), eps_w(mdp, mu, q_class, W), 0.0, mdp.gamma)
        worst_pop = max(worst_pop, sub - rhs)
        held_pop += int(sub <= rhs + 1e-12)
    return [
        Check.make("thm5_empirical_runs_holding", held_emp, 48, ">="),
        Check.make("thm5_population_runs_holding", held_pop, trials, ">="),
        Check.make("thm5_population_max_violation", worst_pop, 1e-12),
    ]


def core_inequality_checks(seed: int, trials: int = 50) -> list[Check]:
    """Population msbo output: suboptimality <= 2 sqrt(C_eff) ||Q - TQ|| / (1 - gamma)."""
    rng = make_rng(seed)
    held, worst = 0, -np.inf
    for _ in range(trials):
        mdp, mu, q_class = _bound_instance(rng)
        q_hat = msbo(Population(mdp, mu), q_class, q_class).chosen_q
        sub = suboptimality(mdp, q_class, q_hat)
        rhs = bellman_error_bound(c_eff(mdp, mu, q_class), bellman_residual_sq(mdp, q_hat, mu), mdp.gamma)
        worst = max(worst, sub - rhs)
        held += int(sub <= rhs + 1e-12)
    return [
        Check.make("core_inequality_runs_holding", held, trials, ">="),
        Check.make("core_inequality_max_violation", worst, 1e-12),
    ]


def avg_vs_sq_checks(seed: int, trials: int = 50) -> list[Check]:
    """With exact importance weights, eps_q_avg <= sqrt(C_eff eps_q_sq) (Cauchy-Schwarz)."""
    rng = make_rng(seed)
    held, worst = 0, -np.inf
    for _ in range(trials):
        mdp, mu, q_class = _bound_instance(rng)
        W = importance_w_class(mdp, mu, q_class)
        lhs = eps_q_avg(mdp, mu, q_class, W)
        rhs = float(np.sqrt(c_eff(mdp, mu, q_class) * eps_q_sq(mdp, mu, q_class)))
        worst = max(worst, lhs - rhs)
        held += int(lhs <= rhs + 1e-12)
    return [
        Check.make("eps_avg_vs_sq_runs_holding", held, trials, ">="),
        Check.make("eps_avg_vs_sq_max_violation", worst, 1e-12),
    ]


def bounds_checks(seed: int) -> list[Check]:
    return (certainty_equivalence_checks(seed) + thm5_checks(seed)
            + core_inequality_checks(seed) + avg_vs_sq_checks(seed))


# ------------------------------------------------------------ counterexamples

CHAIN_CASES = ((2, 0.5), (5, 0.9), (50, 0.9))


def chain_table(length: int, gamma: float, t_max: int | None = None):
    """Computed vs closed-form per-step coefficients of the chain, plus C_eff, C_inf."""
    mdp, mu = chain_mdp(length, gamma)
    pi = DeterministicPolicy((0,) * mdp.num_states)
    t_max = length + 5 if t_max is None else t_max
    computed = per_step_coefficients(mdp, mu, [pi], t_max)
    formula = [1.0 / ((1.0 - gamma) * gamma**t) if t < length else 1.0 / gamma**length
               for t in range(t_max + 1)]
    q_class = QClass(np.zeros((1, mdp.num_states, 1)), mdp.v_max)
    return computed, formula, c_eff(mdp, mu, q_class), c_inf(mdp, mu, q_class)


def chain_checks(seed: int, random_betas: int = 10) -> list[Check]:
    rng = make_rng(seed)
    checks = []
    for L, g in CHAIN_CASES:
        computed, formula, ce, ci = chain_table(L, g)
        rel = max(abs(c - f) / max(1.0, abs(f)) for c, f in zip(computed, formula))
        checks.append(Check.make(f"chain_L{L}_g{g}_per_step_rel_error", rel, 1e-12))
        checks.append(Check.make(f"chain_L{L}_g{g}_c_eff_error", abs(ce - 1.0), 1e-12))
        checks.append(Check.make(f"chain_L{L}_g{g}_c_inf_error", abs(ci - 1.0), 1e-12))
        if g**L <= 1.0 - g:
            # long horizon so the truncated default weights are essentially exact
            long_steps, _, _, _ = chain_table(L, g, t_max=L + 400)
            combos = [per_step_combined(long_steps, gamma=g)]
            for _ in range(random_betas):
                beta = rng.dirichlet(np.ones(len(long_steps)))
                combos.append(per_step_combined(long_steps, beta))
            checks.append(Check.make(f"chain_L{L}_g{g}_min_per_step_combined", min(combos),
                                     1.0 / (1.0 - g) - 1e-9, ">="))
    return checks


def fqi_gap_trace(iterations: int = 20, seed: int = 0, gamma: float = 0.9,
                  resolution: float = 0.5, v_max: float = 10.0):
    """FQI iterates on the two-state counterexample with a shuffled grid class.

    Returns ``(errors, msbo_gap, mabo_gap)`` where ``errors[t]`` is
    ``||Q_t - TQ_t||^2_{2,mu}`` under the data distribution (all mass on ``s1``)
    and the gaps are ``|Q(s1) - gamma Q(s2)|`` of the minimax outputs.
    """
    from .constructions import two_state_counterexample
    from .classes import grid_q_class

    mdp, data = two_state_counterexample(gamma=gamma)
    values = np.arange(0.0, v_max + 1e-9, resolution)
    q_class = grid_q_class(2, 1, values, v_max, seed=seed)
    mu_raw = np.array([[1.0], [0.0]])
    res = fqi(data, q_class, iterations)
    errors = [bellman_residual_sq(mdp, q_class[step["index"]], mu_raw) for step in res.trace]
    q_sq = msbo(data, q_class, q_class).chosen_q
    q_avg = mabo(data, q_class, WClass(np.ones((1, 2, 1)))).chosen_q
    return errors, abs(q_sq[0, 0] - gamma * q_sq[1, 0]), abs(q_avg[0, 0] - gamma * q_avg[1, 0])


def fqi_gap_checks(seed: int, iterations: int = 20, resolution: float = 0.5) -> list[Check]:
    errors, sq_gap, avg_gap = fqi_gap_trace(iterations, seed=seed, resolution=resolution)
    return [
        Check.make("fqi_min_bellman_error_over_iterations", min(errors[1:]), 0.01, ">="),
        Check.make("msbo_gap_vs_resolution", sq_gap, resolution),
        Check.make("mabo_gap_vs_resolution", avg_gap, resolution),
    ]


def counterexample_checks(seed: int) -> list[Check]:
    return chain_checks(seed) + fqi_gap_checks(seed)


# -------------------------------------------------------------------- lowrank

def claim1_checks(seed: int, trials: int = 10) -> list[Check]:
    rng = make_rng(seed)
    worst_eps, worst_size_excess = 0.0, -np.inf
    for _ in range(trials):
        S, A, k = int(rng.integers(3, 7)), int(rng.integers(2, 4)), int(rng.integers(1, 4))
        k = min(k, S)
        spec, mdp = random_lowrank_mdp(S, A, k, seed=int(rng.integers(2**62)))
        mu = random_mu(S, A, seed=int(rng.integers(2**62)))
        q_class = perturbed_q_class(optimal_q(mdp), int(rng.integers(1, 8)), 0.5 * mdp.v_max,
                                    mdp.v_max, seed=int(rng.integers(2**62)))
        W, _ = build_w_claim1(mdp, mu, q_class, k=transition_rank(mdp))
        worst_eps = max(worst_eps, eps_w(mdp, mu, q_class, W))
        bound = (transition_rank(mdp) + 1) * len(q_class.policies())
        worst_size_excess = max(worst_size_excess, len(W) - bound)
    return [
        Check.make("claim1_max_eps_w", worst_eps, 1e-8),
        Check.make("claim1_max_size_excess", worst_size_excess, 0.0),
    ]


def claim2_checks(seed: int, trials: int = 10) -> list[Check]:
    rng = make_rng(seed)
    worst_eps, worst_size_excess = 0.0, -np.inf
    for _ in range(trials):
        S, A, k = int(rng.integers(3, 7)), int(rng.integers(2, 4)), int(rng.integers(1, 4))
        k = min(k, S)
        spec, mdp = random_lowrank_mdp(S, A, k, seed=int(rng.integers(2**62)))
        mu = random_mu(S, A, seed=int(rng.integers(2**62)))
        thetas = theta_grid(k, np.linspace(0.0, mdp.v_max, 4))
        linear = LinearQClass.from_factor(spec.left_factor, mdp, thetas)
        q_class = linear_q_members(linear, mdp)
        W, _ = build_w_claim2(spec, mdp, mu, linear, q_class)
        worst_eps = max(worst_eps, eps_w(mdp, mu, q_class, W))
        worst_size_excess = max(worst_size_excess, len(W) - (k + 1))
    return [
        Check.make("claim2_max_eps_w", worst_eps, 1e-8),
        Check.make("claim2_max_size_excess", worst_size_excess, 0.0),
    ]


def contextual_bandit_checks(num_states: int = 6) -> list[Check]:
    mdp, policies = contextual_bandit_mdp(num_states, 0.9)
    stack = np.stack([compute_occupancy(mdp, pi).reshape(-1) for pi in policies])
    return [
        Check.make("bandit_transition_rank", transition_rank(mdp), 1),
        Check.make("bandit_state_action_stack_rank", numerical_rank(stack), num_states - 1, ">="),
        Check.make("bandit_state_action_stack_rank_max", numerical_rank(stack), num_states - 1),
    ]


def lowrank_checks(seed: int) -> list[Check]:
    start = time.perf_counter()
    checks = claim1_checks(seed) + claim2_checks(seed) + contextual_bandit_checks()
    checks.append(Check.make("lowrank_runtime_seconds", time.perf_counter() - start, 60.0))
    return checks


# ----------------------------------------------------------------------- span

def span_checks(seed: int, trials: int = 100, samples: int = 10_000) -> list[Check]:
    """Sampled unit-l1 combinations never beat the vertex maximum, which a vertex attains."""
    rng = make_rng(seed)
    worst_excess, worst_vertex_gap = -np.inf, 0.0
    for _ in range(trials):
        k, S, A = int(rng.integers(1, 8)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        W = WClass(rng.normal(size=(k, S, A)))
        c = rng.normal(size=(S, A))
        top = span_max_abs(W, c)
        # uniform on the l1 sphere: Dirichlet magnitudes with random signs
        alpha = rng.dirichlet(np.ones(k), size=samples) * rng.choice([-1.0, 1.0], size=(samples, k))
        vals = np.abs(alpha @ np.tensordot(W.members, c, axes=([1, 2], [0, 1])))
        worst_excess = max(worst_excess, float(vals.max()) - top)
        vertex = max(abs(float(np.sum(w * c))) for w in W)
        worst_vertex_gap = max(worst_vertex_gap, abs(vertex - top) / max(1.0, top))
    return [
        Check.make("span_sample_max_excess", worst_excess, 1e-12),
        # equality up to summation-order round-off
        Check.make("span_vertex_attainment_rel_gap", worst_vertex_gap, 1e-12),
    ]


# ---------------------------------------------------------------------- rates

RATE_SIZES = (500, 2000, 8000)


def rate_instance():
    """Fixed realizable instance with small action gaps and noisy transitions."""
    mdp = small_gap_mdp(6, 3, 0.9, seed=0, gap=0.2)
    mu = DataDistribution.uniform(6, 3)
    q_class = reward_shift_q_class(mdp, 60, 0.05, seed=0)
    return mdp, mu, q_class, importance_w_class(mdp, mu, q_class)


def rate_medians(seeds: int = 50, sizes=RATE_SIZES) -> list[float]:
    mdp, mu, q_class, W = rate_instance()
    medians = []
    for n in sizes:
        subs = [suboptimality(mdp, q_class, mabo(generate_batch(mdp, mu, n, seed=s), q_class, W).chosen_q)
                for s in range(seeds)]
        medians.append(float(np.median(subs)))
    return medians


def rate_checks(seed: int) -> list[Check]:
    # the instance and data seeds are fixed; ``seed`` is unused by design
    med = rate_medians()
    increase = max(b - a for a, b in zip(med, med[1:]))
    ratio = med[0] / med[-1] if med[-1] > 0 else float("inf")
    return [Check.make("rate_median_max_increase", increase, 0.0),
            Check.make("rate_median_ratio_500_to_8000", ratio, 2.0, ">=")]


SUITE_FUNCS = {
    "telescoping": telescoping_checks,
    "bounds": bounds_checks,
    "counterexamples": counterexample_checks,
    "lowrank": lowrank_checks,
    "span": span_checks,
    "rates": rate_checks,
}


def run_suite(name: str, seed: int) -> list[Check]:
    if name == "all":
        return [c for s in SUITES for c in SUITE_FUNCS[s](seed)]
    if name not in SUITE_FUNCS:
        raise KeyError(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    return SUITE_FUNCS[name](seed)
