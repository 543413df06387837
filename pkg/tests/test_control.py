import numpy as np
import pytest

from tpd.control import (
    EpsilonSchedule,
    QLearningConfig,
    greedy_policy,
    masked_argmax,
    q_learning_update,
    train_q_learning,
)
from tpd.errors import ConfigError
from tpd.mdp import TabularMdp, make_rng
from tpd.oracle import policy_evaluation, state_values, success_probability

from conftest import chain_mdp


def two_state_mdp():
    return TabularMdp.from_dict(2, 2, {(0, 0): [(1, 1.0, -1.0)], (0, 1): [(1, 1.0, -1.0)],
                                       (1, 0): [(0, 1.0, 0.0)], (1, 1): [(0, 1.0, 0.0)]})


def test_single_update_arithmetic():
    mdp = two_state_mdp()
    q = np.zeros((2, 2))
    assert q_learning_update(q, mdp, 0, 0, -1.0, 1, False, 0.1, 0.99) == pytest.approx(-0.1)


def test_terminal_target_has_no_bootstrap():
    mdp = two_state_mdp()
    q = np.full((2, 2), 50.0)
    q_learning_update(q, mdp, 0, 1, -1.0, 1, True, 0.1, 0.99)
    assert q[0, 1] == pytest.approx(50.0 + 0.1 * (-1.0 - 50.0))


def test_fast_loop_first_step():
    result = train_q_learning(chain_mdp(), QLearningConfig(total_steps=1), make_rng(0))
    assert sorted(result.q[0]) == pytest.approx([0.0, 0.1])
    assert result.curve == [(1, 1.0)]


def test_greedy_argmax_and_ties():
    mdp = two_state_mdp()
    assert greedy_policy(np.array([[2.0, 5.0], [3.0, 3.0]]), mdp).greedy_actions().tolist() == [1, 0]


def test_masked_garbage_never_selected(taxi):
    q = np.zeros((taxi.num_states, taxi.num_actions))
    q[~taxi.valid] = 1e300
    pi = greedy_policy(q, taxi)
    assert taxi.valid[np.arange(taxi.num_states), pi.greedy_actions()].all()
    assert masked_argmax(np.array([9.0, 1.0, 2.0]), np.array([False, True, True])) == 2


def test_epsilon_schedule_linear():
    eps = EpsilonSchedule(1.0, 0.05, 100)
    assert eps(0) == 1.0
    assert eps(50) == pytest.approx(0.525)
    assert eps(100) == eps(10_000) == pytest.approx(0.05)


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        QLearningConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        QLearningConfig.from_dict({"steps": 5})


def test_training_is_deterministic(taxi):
    cfg = QLearningConfig(total_steps=20_000)
    a = train_q_learning(taxi, cfg, make_rng(4, "policy"))
    b = train_q_learning(taxi, cfg, make_rng(4, "policy"))
    np.testing.assert_array_equal(a.q, b.q)
    assert a.curve == b.curve


def test_trained_policy_close_to_optimal(taxi, optimal, trained):
    _, pi_star = optimal
    _, pi = trained
    p_star = success_probability(taxi, pi_star)
    assert abs(success_probability(taxi, pi) - p_star) <= 0.05 * p_star


def test_optimal_dominates_trained_in_every_state(taxi, optimal, trained):
    _, pi_star = optimal
    _, pi = trained
    v_star = state_values(pi_star, policy_evaluation(taxi, pi_star))
    v = state_values(pi, policy_evaluation(taxi, pi))
    assert np.all(v_star >= v - 1e-8)
