"""Temporal policy decomposition: explain a policy's actions by when future events happen.

Exact and learned finite-horizon general value functions over a tabular MDP,
their decomposition into expected future outcomes per time step, and tools to
turn those into reward and contrastive explanations.
"""

from tpd.control import EpsilonSchedule, QLearningConfig, greedy_policy, train_q_learning
from tpd.decomposition import (
    EfoMatrix,
    Explanation,
    contrastive,
    decompose_fhgvf,
    explain,
    reconstruct_fhgvf,
    reconstruct_rewards,
    remainder_bound,
    terminated_by_exclusion,
)
from tpd.errors import (
    ArtifactFormatError,
    ClassificationError,
    ConfigError,
    DistributionError,
    MaskedActionError,
    ShapeError,
    TaxonomyError,
    TerminalStateError,
    TPDError,
)
from tpd.evaluation import EvalReport, collect_eval_states, compute_errors, evaluate_runs
from tpd.fhtd import (
    ExplainerConfig,
    FhgvfTable,
    LearningRateSchedule,
    fhtd_update,
    train_explainer,
    train_explainers,
)
from tpd.mdp import OutcomeSpec, Policy, TabularMdp, Transition, make_rng
from tpd.oracle import (
    exact_efo,
    exact_efos,
    exact_fhgvf,
    monte_carlo_efo,
    policy_evaluation,
    success_probability,
    value_iteration,
)
from tpd.taxi import EVENT_REWARDS, EVENTS, TaxiConfig, build_taxi_mdp, classify_event

__version__ = "0.1.0"
