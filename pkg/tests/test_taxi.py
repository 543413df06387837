import json

import numpy as np
import pytest

from tpd.errors import ClassificationError, ConfigError
from tpd.mdp import enumerate_transitions
from tpd.taxi import (
    DROPOFF,
    EAST,
    EVENT_REWARDS,
    EVENTS,
    NORTH,
    PICKUP,
    REFUEL,
    SOUTH,
    TERMINATED,
    WEST,
    TaxiConfig,
    TaxiState,
    action_mask,
    build_taxi_mdp,
    classify_event,
    decode_state,
    encode_state,
    render,
)

CFG = TaxiConfig()


def test_state_count(taxi):
    assert taxi.num_states == 1050
    assert taxi.terminal.sum() == 50


def test_encode_extremes():
    assert encode_state((0, 0, 0, False)) == 0
    assert encode_state((4, 4, 20, True)) == 1049


def test_decode_encode_bijection():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        ts = TaxiState(int(rng.integers(5)), int(rng.integers(5)), int(rng.integers(21)), bool(rng.integers(2)))
        assert decode_state(encode_state(ts)) == ts
    assert sorted(encode_state(decode_state(i)) for i in range(1050)) == list(range(1050))


def test_encode_out_of_range():
    with pytest.raises(ConfigError):
        encode_state((5, 0, 3, False))
    with pytest.raises(ConfigError):
        decode_state(1050)


def test_dropoff_reward_and_done(taxi):
    s = encode_state((*CFG.destination_corner, 6, True))
    [(s2, p, r, out)] = enumerate_transitions(taxi, s, DROPOFF)
    assert (p, r) == (1.0, 20.0)
    assert out["dropoff"] == 1.0
    assert taxi.done[s, DROPOFF, 0]


@pytest.mark.parametrize("branch", [0, 1])
def test_last_fuel_move_fails(taxi, branch):
    s = encode_state((2, 2, 1, False))
    s2 = taxi.next_states[s, EAST, branch]
    assert decode_state(s2).fuel == 0
    assert taxi.rewards[s, EAST, branch] == -100.0
    assert taxi.done[s, EAST, branch]
    assert classify_event(s, EAST, s2) == "failure"


def test_traffic_classification():
    s = encode_state((2, 2, 8, False))
    assert classify_event(s, WEST, encode_state((2, 2, 7, False))) == "traffic"
    assert classify_event(s, WEST, encode_state((2, 1, 7, False))) == "move"


def test_terminal_self_loop_classified_terminated():
    s = encode_state((0, 3, 0, False))
    assert classify_event(s, NORTH, s) == TERMINATED


def test_classify_unreachable_transition():
    with pytest.raises(ClassificationError):
        classify_event(encode_state((2, 2, 8, False)), WEST, encode_state((0, 0, 3, False)))


def test_exhaustive_labels_and_rewards(taxi):
    """Every supported transition gets exactly one label and the label's reward."""
    tables = np.stack([taxi.outcome_table(e) for e in EVENTS])
    live = taxi.valid & ~taxi.terminal[:, None]
    support = taxi.probs > 0
    for s, a in zip(*np.nonzero(live)):
        for k in np.flatnonzero(support[s, a]):
            label = classify_event(int(s), int(a), int(taxi.next_states[s, a, k]))
            assert tables[:, s, a, k].sum() == 1.0
            assert EVENTS[int(tables[:, s, a, k].argmax())] == label
            assert taxi.rewards[s, a, k] == EVENT_REWARDS[label]
    assert np.all(tables[:, taxi.terminal] == 0)


def test_wall_moves_are_masked():
    # the classic map has a wall east of (0, 1) and between columns 0 and 1 in the bottom rows
    assert not action_mask(TaxiState(0, 1, 5, False), CFG)[EAST]
    assert not action_mask(TaxiState(3, 0, 5, False), CFG)[EAST]
    assert not action_mask(TaxiState(0, 2, 5, False), CFG)[NORTH]
    assert action_mask(TaxiState(2, 2, 5, False), CFG)[[SOUTH, NORTH, EAST, WEST]].all()


def test_service_actions_masked_off_their_corners():
    m = action_mask(TaxiState(2, 2, 5, False), CFG)
    assert not m[[PICKUP, DROPOFF, REFUEL]].any()
    assert action_mask(TaxiState(*CFG.passenger_corner, 5, False), CFG)[PICKUP]
    assert not action_mask(TaxiState(*CFG.passenger_corner, 5, True), CFG)[PICKUP]
    assert action_mask(TaxiState(*CFG.destination_corner, 5, True), CFG)[DROPOFF]
    assert action_mask(TaxiState(*CFG.gas_station_corner, 5, False), CFG)[REFUEL]


def test_nonterminal_states_have_actions(taxi):
    assert taxi.valid[~taxi.terminal].any(axis=1).all()


def test_refuel_saturates_at_capacity(taxi):
    s = encode_state((*CFG.gas_station_corner, 19, False))
    assert decode_state(taxi.next_states[s, REFUEL, 0]).fuel == 20


def test_config_validation():
    with pytest.raises(ConfigError):
        TaxiConfig(passenger_corner=(0, 0), destination_corner=(0, 0))
    with pytest.raises(ConfigError):
        TaxiConfig(traffic_probability=1.0)
    with pytest.raises(ConfigError):
        TaxiConfig.from_dict({"trafic_probability": 0.2})


def test_config_round_trip(tmp_path):
    cfg = TaxiConfig(traffic_probability=0.2, fuel_capacity=12)
    path = tmp_path / "env.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert TaxiConfig.from_json(path) == cfg


def test_zero_traffic_is_deterministic():
    mdp = build_taxi_mdp(TaxiConfig(traffic_probability=0.0))
    s = encode_state((2, 2, 9, False))
    assert len(enumerate_transitions(mdp, s, EAST)) == 1


def test_render_marks_taxi():
    text = render(encode_state((2, 2, 9, False)))
    assert "T" in text and "fuel 9" in text
