import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brl.constructions import random_mdp, random_mu
from brl.data import (
    BatchDataset,
    DataDistribution,
    Population,
    conditional_variance_term,
    empirical_avg_loss,
    empirical_sq_loss,
    generate_batch,
    importance_weight,
    population_avg_loss,
    population_sq_loss,
)
from brl.mdp import DeterministicPolicy, bellman_optimality, compute_occupancy

from conftest import mdp_and_mu, q_tables


def test_distribution_validation():
    DataDistribution.uniform(2, 3)
    with pytest.raises(ValueError):
        DataDistribution(np.array([[0.5, 0.5], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        DataDistribution(np.array([[0.5, 0.6]]))
    with pytest.raises(ValueError):
        DataDistribution(np.array([0.5, 0.5]))


def test_batch_is_deterministic_in_seed():
    mdp = random_mdp(4, 2, 0.9, seed=0)
    mu = random_mu(4, 2, seed=1)
    a, b = generate_batch(mdp, mu, 300, seed=7), generate_batch(mdp, mu, 300, seed=7)
    assert a.tuples() == b.tuples()
    c = generate_batch(mdp, mu, 300, seed=8)
    assert a.tuples() != c.tuples()


def test_batch_frequencies_match_mu_and_transitions():
    mdp = random_mdp(3, 2, 0.9, seed=2)
    mu = random_mu(3, 2, seed=3)
    n = 200_000
    d = generate_batch(mdp, mu, n, seed=0)
    counts = np.zeros((3, 2))
    np.add.at(counts, (d.s, d.a), 1)
    # each cell is binomial: 5 standard deviations is a loose but safe envelope
    sd = np.sqrt(mu.mu * (1 - mu.mu) / n)
    assert np.all(np.abs(counts / n - mu.mu) < 5 * sd)
    for s in range(3):
        for a in range(2):
            sel = (d.s == s) & (d.a == a)
            freq = np.bincount(d.s_next[sel], minlength=3) / sel.sum()
            p = mdp.transition[s, a]
            assert np.all(np.abs(freq - p) < 5 * np.sqrt(p * (1 - p) / sel.sum()) + 1e-12)
    assert np.array_equal(d.r, mdp.reward[d.s, d.a])


def test_batch_never_visits_zero_probability_successor():
    mdp = random_mdp(5, 2, 0.9, seed=4, sparsity=0.6)
    d = generate_batch(mdp, DataDistribution.uniform(5, 2), 20_000, seed=1)
    assert np.all(mdp.transition[d.s, d.a, d.s_next] > 0)


def test_generate_batch_errors():
    mdp = random_mdp(2, 2, 0.9, seed=0)
    with pytest.raises(ValueError):
        generate_batch(mdp, DataDistribution.uniform(2, 2), 0, seed=0)
    with pytest.raises(ValueError):
        generate_batch(mdp, DataDistribution.uniform(3, 2), 10, seed=0)


def test_losses_brute_force_loops():
    mdp = random_mdp(3, 2, 0.9, seed=5)
    d = generate_batch(mdp, DataDistribution.uniform(3, 2), 50, seed=2)
    rng = np.random.default_rng(0)
    q, qt, w = (rng.uniform(0, 5, size=(3, 2)) for _ in range(3))
    sq = np.mean([(q[s, a] - r - 0.9 * max(qt[s2])) ** 2 for s, a, r, s2 in d.tuples()])
    avg = np.mean([w[s, a] * (r + 0.9 * max(q[s2]) - q[s, a]) for s, a, r, s2 in d.tuples()])
    assert empirical_sq_loss(d, q, qt) == pytest.approx(sq, abs=1e-12)
    assert empirical_avg_loss(d, q, w) == pytest.approx(avg, abs=1e-12)


def test_population_sq_loss_enumeration():
    mdp = random_mdp(3, 2, 0.8, seed=6)
    mu = random_mu(3, 2, seed=7)
    rng = np.random.default_rng(1)
    q, qt = rng.uniform(0, 5, size=(3, 2)), rng.uniform(0, 5, size=(3, 2))
    exact = sum(mu.mu[s, a] * mdp.transition[s, a, s2] * (q[s, a] - mdp.reward[s, a] - 0.8 * qt[s2].max()) ** 2
                for s in range(3) for a in range(2) for s2 in range(3))
    assert population_sq_loss(mdp, mu, q, qt) == pytest.approx(exact, abs=1e-12)
    # the variance term is what a squared loss over-counts relative to ||q - T qt||^2
    bias = np.sum(mu.mu * (q - bellman_optimality(mdp, qt)) ** 2)
    assert population_sq_loss(mdp, mu, q, qt) - bias == pytest.approx(
        conditional_variance_term(mdp, mu, qt), abs=1e-12)


def test_empirical_losses_converge_to_population():
    mdp = random_mdp(3, 2, 0.9, seed=8)
    mu = random_mu(3, 2, seed=9)
    d = generate_batch(mdp, mu, 400_000, seed=3)
    rng = np.random.default_rng(2)
    q, qt, w = rng.uniform(0, 5, size=(3, 2)), rng.uniform(0, 5, size=(3, 2)), rng.normal(size=(3, 2))
    assert empirical_sq_loss(d, q, qt) == pytest.approx(population_sq_loss(mdp, mu, q, qt), rel=2e-2)
    assert empirical_avg_loss(d, q, w) == pytest.approx(population_avg_loss(mdp, mu, q, w), abs=2e-2)


@given(mdp_and_mu())
def test_population_interface_matches_functions(pair):
    mdp, mu = pair
    rng = np.random.default_rng(0)
    qs = rng.uniform(0, mdp.v_max, size=(3, *mdp.shape))
    ws = rng.normal(size=(2, *mdp.shape))
    pop = Population(mdp, mu)
    sq = pop.sq_losses(qs, qs[0])
    assert np.allclose(sq, [population_sq_loss(mdp, mu, q, qs[0]) for q in qs])
    L = pop.avg_losses(qs, ws)
    assert np.allclose(L, [[population_avg_loss(mdp, mu, q, w) for w in ws] for q in qs])


@given(st.data())
def test_importance_weight_reweights_mu_to_occupancy(data):
    mdp, mu = data.draw(mdp_and_mu())
    pi = DeterministicPolicy(tuple(data.draw(st.integers(0, mdp.num_actions - 1))
                                   for _ in range(mdp.num_states)))
    w = importance_weight(mdp, pi, mu)
    assert np.allclose(w * mu.mu, compute_occupancy(mdp, pi), atol=1e-14)
    assert abs(np.sum(w * mu.mu) - 1) < 1e-12


def test_csv_roundtrip(tmp_path):
    mdp = random_mdp(3, 2, 0.9, seed=0)
    d = generate_batch(mdp, DataDistribution.uniform(3, 2), 40, seed=5)
    path = tmp_path / "d.csv"
    d.to_csv(path)
    back = BatchDataset.from_csv(path, mdp)
    assert back.tuples() == d.tuples()
    path.write_text("s,a,r,s_next\n0,0,0.5,7\n")
    with pytest.raises(ValueError, match="row 1"):
        BatchDataset.from_csv(path, mdp)
    path.write_text("a,s,r,s_next\n")
    with pytest.raises(ValueError):
        BatchDataset.from_csv(path, mdp)


def test_empty_dataset_rejected():
    d = BatchDataset([], [], [], [], gamma=0.9)
    with pytest.raises(ValueError):
        d.sq_losses(np.zeros((1, 1, 1)), np.zeros((1, 1)))
