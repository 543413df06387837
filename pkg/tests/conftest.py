import numpy as np
import pytest

from tpd.control import QLearningConfig, greedy_policy, train_q_learning
from tpd.mdp import OutcomeSpec, TabularMdp, make_rng
from tpd.oracle import value_iteration
from tpd.taxi import TaxiConfig, build_taxi_mdp


@pytest.fixture(scope="session")
def taxi():
    return build_taxi_mdp(TaxiConfig())


@pytest.fixture(scope="session")
def optimal(taxi):
    q, policy = value_iteration(taxi)
    return q, policy


@pytest.fixture(scope="session")
def trained(taxi):
    """Greedy policy from a full-budget Q-learning run (seed 0)."""
    result = train_q_learning(taxi, QLearningConfig(), make_rng(0, "policy"))
    return result, greedy_policy(result.q, taxi)


def chain_mdp():
    """A -> B deterministically under both actions; B is absorbing."""
    enter_b = OutcomeSpec("enter_b", lambda s, a, s2: float(s == 0 and s2 == 1),
                          kind="event-indicator", reward=1.0)
    return TabularMdp.from_dict(
        2, 2, {(0, 0): [(1, 1.0, 1.0)], (0, 1): [(1, 1.0, 1.0)]},
        terminal=[1], initial=[1.0, 0.0], outcomes=(enter_b,), max_episode_steps=10,
    )


def random_mdp(seed, num_states=3, num_actions=2):
    """Dense random MDP with a Dirichlet target policy and no terminal states."""
    rng = np.random.default_rng(seed)
    S, A = num_states, num_actions
    p = rng.dirichlet(np.ones(S), size=(S, A))
    r = rng.uniform(-1.0, 1.0, size=(S, A, S))
    ns = np.broadcast_to(np.arange(S), (S, A, S)).copy()
    mdp = TabularMdp(ns, p, r, np.zeros((S, A, S), dtype=bool), np.ones((S, A), dtype=bool),
                     np.zeros(S, dtype=bool), np.full(S, 1.0 / S), discount=0.9)
    pi = rng.dirichlet(np.ones(A), size=S)
    return mdp, pi


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str, notes=()) -> bool:
    lines = [f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}", *(f"      {n}" for n in notes)]
    ACCEPTANCE.extend(lines)
    print("\n".join(lines))
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
