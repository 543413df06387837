import numpy as np
import pytest

from tpd.errors import ConfigError, ShapeError
from tpd.fhtd import (
    BehaviorPolicy,
    ExplainerConfig,
    FhgvfTable,
    LearningRateSchedule,
    TrainingLog,
    fhtd_update,
    make_transition,
    train_explainer,
    train_explainers,
)
from tpd.mdp import Policy, Transition, make_rng
from tpd.oracle import exact_fhgvf
from tpd.taxi import EVENTS

from conftest import chain_mdp, random_mdp

CONST = LearningRateSchedule()


def _tr(s, a, s2, o, done=False, name="x"):
    return Transition(s, a, s2, 0.0, {name: o}, done)


def test_level_zero_target_is_outcome():
    table = FhgvfTable.zeros("x", 3, 2, 1, target_policy=Policy(np.ones((2, 1))))
    fhtd_update(table, _tr(0, 0, 1, 1.0), CONST, next_action=0)
    assert table.values[0, 0, 0] == pytest.approx(0.1)


def test_level_one_bootstraps_from_level_zero():
    table = FhgvfTable.zeros("x", 2, 2, 1, target_policy=Policy(np.ones((2, 1))))
    table.values[0, 1, 0] = 0.5
    fhtd_update(table, _tr(0, 0, 1, 0.0), CONST, next_action=0)
    assert table.values[1, 0, 0] == pytest.approx(0.05)
    assert table.values[0, 0, 0] == 0.0


def test_done_transition_targets_outcome_everywhere():
    table = FhgvfTable.zeros("x", 4, 2, 1, target_policy=Policy(np.ones((2, 1))))
    table.values[:, 1, 0] = 7.0
    fhtd_update(table, _tr(0, 0, 1, 1.0, done=True), LearningRateSchedule(rate=1.0))
    np.testing.assert_array_equal(table.values[:, 0, 0], [1.0, 1.0, 1.0, 1.0])


def test_expected_backup_averages_target_policy():
    pi = Policy(np.array([[1.0, 0.0], [0.25, 0.75]]))
    table = FhgvfTable.zeros("x", 2, 2, 2, target_policy=pi)
    table.values[0, 1] = [1.0, 2.0]
    fhtd_update(table, _tr(0, 0, 1, 0.0), LearningRateSchedule(rate=1.0), expected_backup=True)
    assert table.values[1, 0, 0] == pytest.approx(1.75)


def test_update_counts_visits():
    table = FhgvfTable.zeros("x", 2, 2, 1, target_policy=Policy(np.ones((2, 1))))
    for _ in range(3):
        fhtd_update(table, _tr(0, 0, 1, 1.0), CONST, next_action=0)
    assert table.visits[0, 0] == 3 and table.steps == 3


def test_sampled_bootstrap_needs_rng():
    table = FhgvfTable.zeros("x", 2, 2, 1, target_policy=Policy(np.ones((2, 1))))
    with pytest.raises(ConfigError):
        fhtd_update(table, _tr(0, 0, 1, 1.0), CONST)


def test_polynomial_schedule():
    sched = LearningRateSchedule("polynomial", exponent=0.7)
    assert sched(0) == 1.0
    assert sched(9) == pytest.approx(10 ** -0.7)
    assert sched.robbins_monro and not CONST.robbins_monro
    with pytest.raises(ConfigError):
        LearningRateSchedule("polynomial", exponent=0.5)


def test_behavior_policy_mixes_uniform(taxi, optimal):
    _, pi = optimal
    beta = BehaviorPolicy(pi, 0.2).probs(taxi)
    np.testing.assert_allclose(beta.sum(axis=1), 1.0)
    assert np.all(beta[taxi.valid] > 0) and np.all(beta[~taxi.valid] == 0)


def test_chain_learns_oracle():
    mdp = chain_mdp()
    pi = Policy(np.array([[1.0, 0.0], [1.0, 0.0]]))
    cfg = ExplainerConfig(horizon=4, total_steps=100_000, exploration=0.5)
    table = train_explainer(mdp, pi, "enter_b", cfg, make_rng(0))
    exact = exact_fhgvf(mdp, pi, "enter_b", 4)
    np.testing.assert_allclose(table.values[:, 0], exact[:, 0], atol=1e-2)


def test_no_exploration_leaves_off_policy_entries_zero(taxi, optimal):
    _, pi = optimal
    cfg = ExplainerConfig(horizon=5, total_steps=20_000, exploration=0.0)
    table = train_explainer(taxi, pi, "move", cfg, make_rng(0))
    off = pi.probs == 0
    assert np.all(table.visits[off] == 0)
    assert np.all(table.values[:, off] == 0)
    assert table.visits.sum() == 20_000


def test_fast_loop_matches_reference_update(taxi, optimal):
    """Replaying the logged transitions through ``fhtd_update`` gives the same tables."""
    _, pi = optimal
    cfg = ExplainerConfig(horizon=6, total_steps=3_000,
                          schedule=LearningRateSchedule("polynomial", exponent=0.8))
    log = TrainingLog(transitions=[])
    fast = train_explainers(taxi, pi, ["pickup", "move"], cfg, make_rng(2), log=log)
    for name in ("pickup", "move"):
        ref = FhgvfTable.zeros(name, 6, taxi.num_states, taxi.num_actions, target_policy=pi)
        for s, a, s2, done, a2 in log.transitions:
            fhtd_update(ref, make_transition(taxi, s, a, s2, done), cfg.schedule,
                        next_action=None if a2 < 0 else a2, expected_backup=False,
                        rng=None if a2 >= 0 else make_rng(0))
        np.testing.assert_array_equal(fast[name].values, ref.values)
        np.testing.assert_array_equal(fast[name].visits, ref.visits)


def test_values_bounded_by_horizon(taxi, optimal):
    _, pi = optimal
    cfg = ExplainerConfig(horizon=8, total_steps=30_000)
    table = train_explainer(taxi, pi, "move", cfg, make_rng(1))
    bound = np.arange(1, 9)[:, None, None]
    assert np.all(np.abs(table.values) <= bound + 1e-12)


def test_training_is_deterministic(taxi, optimal):
    _, pi = optimal
    cfg = ExplainerConfig(horizon=5, total_steps=5_000)
    a = train_explainers(taxi, pi, ["refuel", "traffic"], cfg, make_rng(7, "explainer"))
    b = train_explainers(taxi, pi, ["refuel", "traffic"], cfg, make_rng(7, "explainer"))
    for name in a:
        np.testing.assert_array_equal(a[name].values, b[name].values)


def test_separate_streams(taxi, optimal):
    _, pi = optimal
    cfg = ExplainerConfig(horizon=3, total_steps=2_000, shared_trajectories=False)
    tables = train_explainers(taxi, pi, ["pickup", "move"], cfg, make_rng(0))
    assert not np.array_equal(tables["pickup"].visits, tables["move"].visits)


def test_resume_continues_step_count(taxi, optimal):
    _, pi = optimal
    cfg = ExplainerConfig(horizon=3, total_steps=1_000)
    first = train_explainers(taxi, pi, ["move"], cfg, make_rng(0))
    second = train_explainers(taxi, pi, ["move"], cfg, make_rng(1), tables=first)
    assert second["move"].steps == 2_000
    assert second["move"].visits.sum() == 2_000


def test_resume_shape_mismatch(taxi, optimal):
    _, pi = optimal
    first = train_explainers(taxi, pi, ["move"], ExplainerConfig(horizon=3, total_steps=10), make_rng(0))
    with pytest.raises(ShapeError):
        train_explainers(taxi, pi, ["move"], ExplainerConfig(horizon=4, total_steps=10), make_rng(0),
                         tables=first)


def test_expected_backup_learns(taxi, optimal):
    _, pi = optimal
    cfg = ExplainerConfig(horizon=4, total_steps=20_000, expected_backup=True)
    table = train_explainer(taxi, pi, "move", cfg, make_rng(0))
    assert table.values.max() > 0


def test_unknown_outcome_rejected(taxi, optimal):
    with pytest.raises(Exception):
        train_explainers(taxi, optimal[1], ["teleport"], ExplainerConfig(total_steps=10), make_rng(0))


def test_random_mdp_polynomial_converges():
    mdp, pi = random_mdp(0)
    policy = Policy(pi)
    cfg = ExplainerConfig(horizon=5, total_steps=200_000, exploration=1.0,
                          schedule=LearningRateSchedule("polynomial", exponent=0.7))
    table = train_explainer(mdp, policy, "reward", cfg, make_rng(0, "conv"))
    exact = exact_fhgvf(mdp, policy, "reward", 5, 1.0)
    assert np.abs(table.values - exact).max() < 0.1


def test_config_round_trip():
    cfg = ExplainerConfig(horizon=12, schedule=LearningRateSchedule("polynomial", exponent=0.9))
    assert ExplainerConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ExplainerConfig.from_dict({"horizn": 3})


def test_all_default_events_train_together(taxi, optimal):
    tables = train_explainers(taxi, optimal[1], EVENTS, ExplainerConfig(horizon=3, total_steps=100),
                              make_rng(0))
    assert list(tables) == list(EVENTS)
