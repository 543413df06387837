import numpy as np
import pytest

from tpd.decomposition import decompose_fhgvf, reconstruct_fhgvf
from tpd.errors import ConfigError, MaskedActionError
from tpd.mdp import Policy, TabularMdp, make_rng
from tpd.oracle import (
    exact_efo,
    exact_efos,
    exact_fhgvf,
    monte_carlo_efo,
    policy_evaluation,
    value_iteration,
)
from tpd.taxi import EVENTS, encode_state

from conftest import chain_mdp, random_mdp


def test_horizon_one_is_expected_immediate_outcome():
    mdp, pi = random_mdp(1)
    q = exact_fhgvf(mdp, Policy(pi), "reward", 1, 0.9)
    np.testing.assert_allclose(q[0], (mdp.probs * mdp.rewards).sum(axis=2), atol=1e-15)


def test_chain_enter_b():
    mdp = chain_mdp()
    pi = Policy(np.array([[0.3, 0.7], [0.5, 0.5]]))
    efo = exact_efos(mdp, pi, "enter_b", 6)
    np.testing.assert_array_equal(efo[:, 0, :], [[1, 1]] + [[0, 0]] * 5)


def test_deterministic_trajectory():
    # ring 0 -> 1 -> 2 -> 0 with rewards 1, 2, 3
    mdp = TabularMdp.from_dict(3, 1, {(s, 0): [((s + 1) % 3, 1.0, float(s + 1))] for s in range(3)})
    pi = Policy(np.ones((3, 1)))
    efo = exact_efo(mdp, pi, "reward", 7, 0.8, 1, 0)
    np.testing.assert_allclose(efo.values, [2, 3, 1, 2, 3, 1, 2], atol=1e-12)


def test_decompose_of_oracle_round_trips(taxi, optimal):
    _, pi = optimal
    q = exact_fhgvf(taxi, pi, "move", 30, 1.0)
    np.testing.assert_allclose(reconstruct_fhgvf(decompose_fhgvf(q, 1.0), 1.0), q, atol=1e-12)


def test_finite_horizon_approaches_infinite(taxi, optimal):
    _, pi = optimal
    q_inf = policy_evaluation(taxi, pi)
    q_h = exact_fhgvf(taxi, pi, "reward", 2000, taxi.discount)[-1]
    np.testing.assert_allclose(q_h, q_inf, atol=1e-6)


def test_value_iteration_geometric_series():
    mdp = TabularMdp.from_dict(1, 1, {(0, 0): [(0, 1.0, 1.0)]}, discount=0.5)
    q, pi = value_iteration(mdp)
    assert q[0, 0] == pytest.approx(2.0, abs=1e-9)


def test_value_iteration_residual(taxi, optimal):
    q, _ = optimal
    gamma = taxi.discount
    v = np.where(taxi.valid, q, -np.inf).max(axis=1)
    backup = (taxi.probs * (taxi.rewards + gamma * ~taxi.done * v[taxi.next_states])).sum(axis=2)
    assert np.max(np.abs(np.where(taxi.valid, backup - q, 0.0))) < 1e-8


def test_fuel_ten_state_dropoff_timing(taxi, optimal):
    _, pi = optimal
    s = encode_state((1, 1, 10, False))
    a = int(pi.greedy_actions()[s])
    efo = exact_efo(taxi, pi, "dropoff", 30, 1.0, s, a).values
    assert 9 <= int(np.argmax(efo)) <= 11
    assert efo[9:12].sum() > 0.5


def test_fuel_threshold_switches_strategy(taxi, optimal):
    _, pi = optimal
    s = encode_state((1, 1, 9, False))
    a = int(pi.greedy_actions()[s])
    refuel = exact_efo(taxi, pi, "refuel", 30, 1.0, s, a).values
    assert refuel[4:13].sum() > 1.0


def test_policy_with_masked_mass_rejected(taxi):
    probs = np.full((taxi.num_states, taxi.num_actions), 1.0 / taxi.num_actions)
    with pytest.raises(MaskedActionError):
        exact_fhgvf(taxi, Policy(probs), "move", 3)


def test_unknown_outcome(taxi, optimal):
    with pytest.raises(Exception):
        exact_fhgvf(taxi, optimal[1], "teleport", 3)


def test_monte_carlo_matches_small_case(taxi, optimal):
    _, pi = optimal
    s, a = encode_state((2, 2, 6, False)), 2
    mean, se = monte_carlo_efo(taxi, pi, list(EVENTS), s, a, 12, 20_000, make_rng(0, "mc-test"))
    exact = np.stack([exact_efo(taxi, pi, e, 12, 1.0, s, a).values for e in EVENTS])
    assert mean.shape == se.shape == (len(EVENTS), 12)
    np.testing.assert_allclose(mean, exact, atol=0.02)


def test_value_iteration_divergence_guard():
    mdp = TabularMdp.from_dict(1, 1, {(0, 0): [(0, 1.0, 1.0)]}, discount=1.0)
    with pytest.raises(ConfigError):
        value_iteration(mdp, max_iterations=100)
