"""
Training the taxi policy
========================

A tabular Q-learning agent learns to fetch the passenger, drop them off and
refuel when needed.  The result is compared with the optimal policy from
value iteration, using exact success probabilities rather than rollouts.
"""

import json
from pathlib import Path

import numpy as np

from tpd import io as tio
from tpd.control import QLearningConfig, greedy_policy, train_q_learning
from tpd.mdp import make_rng
from tpd.oracle import success_probability, value_iteration
from tpd.taxi import TaxiConfig, build_taxi_mdp, render

out = Path("demo_output")
out.mkdir(exist_ok=True)

env = TaxiConfig()
mdp = build_taxi_mdp(env)
print(f"{mdp.num_states} states, {mdp.valid.sum()} valid state-action pairs")

# half a million steps, epsilon decaying linearly over the first half
result = train_q_learning(mdp, QLearningConfig(), make_rng(0, "policy"))
policy = greedy_policy(result.q, mdp)

returns = np.array([r for _, r in result.curve])
print(f"{len(returns)} episodes, mean return of the last 1000: {returns[-1000:].mean():.2f}")

_, optimal = value_iteration(mdp)
p, p_star = success_probability(mdp, policy), success_probability(mdp, optimal)
print(f"success probability {p:.4f} (optimal {p_star:.4f})")

tio.save_policy(policy, out / "policy.tpd")
(out / "env.json").write_text(json.dumps(env.to_dict(), indent=2))

# a start state and the policy's first choice there
rng = make_rng(1, "demo")
s = mdp.sample_initial(rng)
print(render(s, env))
print("policy action:", mdp.action_names[policy.greedy_actions()[s]])
