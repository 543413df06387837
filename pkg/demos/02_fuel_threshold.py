"""
Why refuel at 9 but not at 10?
==============================

Two states differ only in fuel.  The explainers predict, step by step, how
likely each event is.  With 10 units the taxi heads straight for the passenger.
With 9 it detours to the gas station first.
"""

from pathlib import Path

import numpy as np

from tpd.control import QLearningConfig, greedy_policy, train_q_learning
from tpd.decomposition import explain
from tpd.fhtd import ExplainerConfig, train_explainers
from tpd.mdp import make_rng
from tpd.svg import grouped_bar_chart, stacked_bar_chart
from tpd.taxi import EVENT_REWARDS, EVENTS, build_taxi_mdp, encode_state

out = Path("demo_output")
out.mkdir(exist_ok=True)

mdp = build_taxi_mdp()
policy = greedy_policy(train_q_learning(mdp, QLearningConfig(), make_rng(0, "policy")).q, mdp)

# one shared stream of behavior-policy experience feeds all six explainers
tables = train_explainers(mdp, policy, EVENTS, ExplainerConfig(total_steps=2_000_000), make_rng(0, "explainer/0"))
values = {e: t.values for e, t in tables.items()}

for fuel in (10, 9):
    s = encode_state((0, 0, fuel, False))
    a = int(policy.greedy_actions()[s])
    exp = explain(values, s, a, EVENT_REWARDS)
    peak = {e: int(np.argmax(exp.event_probs[k])) for k, e in enumerate(EVENTS)}
    print(f"fuel {fuel}, action {mdp.action_names[a]}: most likely step per event {peak}")
    print(f"  expected refuels in 30 steps: {exp.event_probs[EVENTS.index('refuel')].sum():.2f}")
    print(f"  truncated return {exp.rewards.value:.2f}")

    series = {e: exp.terminated.clamped_events[k] for k, e in enumerate(EVENTS)}
    series["terminated/unknown"] = exp.terminated.clamped
    (out / f"fuel{fuel}_events.svg").write_text(stacked_bar_chart(series, f"Future events, fuel {fuel}"))
    comps = {e: exp.rewards.components[k] for k, e in enumerate(EVENTS)}
    (out / f"fuel{fuel}_rewards.svg").write_text(grouped_bar_chart(comps, f"Reward components, fuel {fuel}"))
