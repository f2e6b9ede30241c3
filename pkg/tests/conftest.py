import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from brl.constructions import random_mdp, random_mu
from brl.mdp import DeterministicPolicy

settings.register_profile(
    "brl", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("brl")


@st.composite
def mdps(draw, max_states=6, max_actions=3, gammas=(0.5, 0.9, 0.99)):
    S = draw(st.integers(1, max_states))
    A = draw(st.integers(1, max_actions))
    gamma = draw(st.sampled_from(gammas))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_mdp(S, A, gamma, seed)


@st.composite
def mdp_and_mu(draw, **kw):
    mdp = draw(mdps(**kw))
    mu = random_mu(*mdp.shape, seed=draw(st.integers(0, 2**32 - 1)))
    return mdp, mu


def policies_for(mdp):
    return st.tuples(*[st.integers(0, mdp.num_actions - 1)] * mdp.num_states).map(DeterministicPolicy)


def q_tables(mdp):
    return st.integers(0, 2**32 - 1).map(
        lambda s: np.random.default_rng(s).uniform(0.0, mdp.v_max, size=mdp.shape)
    )


@pytest.fixture
def small_mdp():
    return random_mdp(3, 2, 0.9, seed=1)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
