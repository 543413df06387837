"""
How accurate are the learned explanations?
==========================================

Learned event probabilities are compared with exact ones on every state the
policy visits in 10^4 episodes, separately for the policy's own action and
for the alternatives.  Three seeds keep this quick; pass a larger number on
the command line for more.
"""

import sys

from tpd.control import QLearningConfig, greedy_policy, train_q_learning
from tpd.evaluation import evaluate_runs
from tpd.fhtd import ExplainerConfig, train_explainers
from tpd.mdp import make_rng
from tpd.oracle import exact_fhgvf
from tpd.taxi import EVENTS, build_taxi_mdp

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 3

mdp = build_taxi_mdp()
policy = greedy_policy(train_q_learning(mdp, QLearningConfig(), make_rng(0, "policy")).q, mdp)
config = ExplainerConfig()
oracle = {e: exact_fhgvf(mdp, policy, e, config.horizon, config.discount) for e in EVENTS}

learned = []
for seed in range(runs):
    tables = train_explainers(mdp, policy, EVENTS, config, make_rng(seed, "explainer/0"))
    learned.append({e: t.values for e, t in tables.items()})
    print(f"seed {seed} trained")

report = evaluate_runs(mdp, policy, learned, oracle, 10_000, [make_rng(s, "eval") for s in range(runs)])
print(report.render_table())
