import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from brl.classes import indicator_w_class
from brl.constructions import perturbed_q_class, random_mdp
from brl.data import DataDistribution
from brl.diagnostics import eps_w_lp
from brl.lp import InfeasibleError, UnboundedError, solve_lp
from brl.mdp import optimal_q


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_matches_highs_on_feasible_lps(seed, integer):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 20)), int(rng.integers(1, 12))
    A = rng.normal(size=(m, n))
    if integer:
        A = np.round(A)  # integer data makes ties and degeneracy common
    b = A @ rng.random(n) + rng.random(m) * rng.integers(0, 2)
    c = rng.normal(size=n)
    ref = linprog(c, A_ub=A, b_ub=b, bounds=(0, None), method="highs")
    if ref.status == 3:
        with pytest.raises(UnboundedError):
            solve_lp(c, A, b)
        return
    assert ref.status == 0
    res = solve_lp(c, A, b)
    assert res.objective == pytest.approx(ref.fun, abs=1e-8 * max(1, abs(ref.fun)))
    assert np.all(A @ res.x <= b + 1e-8) and np.all(res.x >= 0)
    assert res.duality_gap <= 1e-8


def test_infeasible_and_unbounded():
    with pytest.raises(InfeasibleError):
        solve_lp([1.0], [[1.0], [-1.0]], [1.0, -2.0])
    with pytest.raises(UnboundedError):
        solve_lp([-1.0, 0.0], [[1.0, -1.0]], [1.0])
    with pytest.raises(ValueError):
        solve_lp([1.0], [[1.0, 1.0]], [1.0])


def test_degenerate_weight_lp_regression():
    # degenerate instance (optimum 0, many tied rows) that once ended on a singular basis
    mdp = random_mdp(4, 2, 0.9, seed=11)
    mu = DataDistribution.uniform(4, 2)
    q_class = perturbed_q_class(optimal_q(mdp), 30, 1.0, mdp.v_max, seed=5)
    W = indicator_w_class(4, 2, mu, scaled=True)
    for pi in q_class.policies():
        value, alpha = eps_w_lp(mdp, mu, q_class, W, pi)
        assert value < 1e-9
        assert np.sum(np.abs(alpha)) <= 1 + 1e-12
