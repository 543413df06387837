"""Exact dynamic-programming ground truth for enumerable MDPs."""

from __future__ import annotations

import numpy as np

from tpd.control import greedy_policy
from tpd.decomposition import ORACLE, EfoMatrix, decompose_fhgvf
from tpd.errors import ConfigError
from tpd.mdp import OutcomeSpec, Policy, TabularMdp


def _outcome_array(mdp: TabularMdp, outcome: str | OutcomeSpec) -> np.ndarray:
    if isinstance(outcome, OutcomeSpec):
        if outcome.name in mdp.outcome_names:
            return mdp.outcome_table(outcome.name)
        return mdp.with_outcomes(outcome).outcome_table(outcome.name)
    return mdp.outcome_table(outcome)


def _check(mdp: TabularMdp, policy: Policy) -> None:
    if not isinstance(mdp, TabularMdp):
        raise ConfigError("the exact oracle needs an enumerable TabularMdp")
    policy.check_mask(mdp)


def exact_fhgvf(
    mdp: TabularMdp,
    policy: Policy,
    outcome: str | OutcomeSpec,
    horizon: int,
    discount: float = 1.0,
) -> np.ndarray:
    """Fixed-horizon GVFs ``Q_{o,h}`` for ``h = 0..H-1`` as an ``(H, S, A)`` array.

    Uses the expected backup over ``policy`` and never bootstraps through
    episode-ending transitions.
    """
    _check(mdp, policy)
    if horizon < 1:
        raise ConfigError("horizon must be positive")
    o = _outcome_array(mdp, outcome)
    p = mdp.probs
    ns = mdp.next_states
    cont = discount * p * ~mdp.done
    immediate = (p * o).sum(axis=2)
    out = np.empty((horizon, mdp.num_states, mdp.num_actions))
    out[0] = immediate
    for h in range(1, horizon):
        v = (policy.probs * out[h - 1]).sum(axis=1)
        out[h] = immediate + (cont * v[ns]).sum(axis=2)
    return out


def exact_efo(
    mdp: TabularMdp,
    policy: Policy,
    outcome: str | OutcomeSpec,
    horizon: int,
    discount: float,
    state: int,
    action: int,
) -> EfoMatrix:
    q = exact_fhgvf(mdp, policy, outcome, horizon, discount)[:, state, action]
    name = outcome.name if isinstance(outcome, OutcomeSpec) else outcome
    return EfoMatrix(name, decompose_fhgvf(q, discount), discount, ORACLE)


def exact_efos(mdp: TabularMdp, policy: Policy, outcome: str | OutcomeSpec, horizon: int,
               discount: float = 1.0) -> np.ndarray:
    """EFOs for every state-action pair, ``(H, S, A)``."""
    return decompose_fhgvf(exact_fhgvf(mdp, policy, outcome, horizon, discount), discount)


def value_iteration(
    mdp: TabularMdp,
    discount: float | None = None,
    tolerance: float = 1e-10,
    max_iterations: int = 1_000_000,
) -> tuple[np.ndarray, Policy]:
    """Optimal Q over valid actions and its greedy policy."""
    gamma = mdp.discount if discount is None else discount
    p, ns = mdp.probs, mdp.next_states
    immediate = (p * mdp.rewards).sum(axis=2)
    cont = gamma * p * ~mdp.done
    q = np.zeros((mdp.num_states, mdp.num_actions))
    masked = np.where(mdp.valid, 0.0, -np.inf)
    for _ in range(max_iterations):
        v = (q + masked).max(axis=1)
        q_new = np.where(mdp.valid, immediate + (cont * v[ns]).sum(axis=2), 0.0)
        residual = np.max(np.abs(q_new - q))
        q = q_new
        if residual < tolerance:
            return q, greedy_policy(q, mdp)
        if not np.isfinite(residual):
            break
    raise ConfigError(f"value iteration did not reach {tolerance} within {max_iterations} sweeps")


def policy_evaluation(
    mdp: TabularMdp,
    policy: Policy,
    outcome: str | OutcomeSpec = "reward",
    discount: float | None = None,
    tolerance: float = 1e-10,
    max_iterations: int = 1_000_000,
) -> np.ndarray:
    """Infinite-horizon ``Q^pi_o`` by iterating the expected Bellman operator."""
    _check(mdp, policy)
    gamma = mdp.discount if discount is None else discount
    o = _outcome_array(mdp, outcome)
    p, ns = mdp.probs, mdp.next_states
    immediate = (p * o).sum(axis=2)
    cont = gamma * p * ~mdp.done
    q = np.zeros((mdp.num_states, mdp.num_actions))
    for _ in range(max_iterations):
        v = (policy.probs * q).sum(axis=1)
        q_new = immediate + (cont * v[ns]).sum(axis=2)
        residual = np.max(np.abs(q_new - q))
        q = q_new
        if residual < tolerance:
            return q
    raise ConfigError(f"policy evaluation did not converge within {max_iterations} sweeps")


def state_values(policy: Policy, q: np.ndarray) -> np.ndarray:
    return (policy.probs * q).sum(axis=1)


def success_probability(
    mdp: TabularMdp,
    policy: Policy,
    success: str = "dropoff",
    horizon: int | None = None,
) -> float:
    """Probability, under the start distribution, that ``success`` happens
    within ``horizon`` steps (default: the MDP's episode limit)."""
    horizon = horizon or mdp.max_episode_steps
    if horizon is None:
        raise ConfigError("success_probability needs a horizon")
    q = exact_fhgvf(mdp, policy, success, horizon, 1.0)[-1]
    return float(mdp.initial @ state_values(policy, q))


def monte_carlo_efo(
    mdp: TabularMdp,
    policy: Policy,
    outcomes: list[str],
    state: int,
    action: int,
    horizon: int,
    num_rollouts: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample means and standard errors of each outcome at steps ``0..H-1``.

    Rollouts run in parallel; once an episode ends its outcomes stay 0.
    Returns two ``(len(outcomes), H)`` arrays.
    """
    tables = np.stack([_outcome_array(mdp, o) for o in outcomes])
    n = num_rollouts
    s = np.full(n, state, dtype=np.int64)
    a = np.full(n, action, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    sums = np.zeros((len(outcomes), horizon))
    sq = np.zeros((len(outcomes), horizon))
    for h in range(horizon):
        u = rng.random(n)
        k = (u[:, None] >= mdp.cum_probs[s, a]).sum(axis=1)
        k = np.minimum(k, mdp.probs.shape[2] - 1)
        values = tables[:, s, a, k] * alive
        sums[:, h] = values.sum(axis=1)
        sq[:, h] = (values**2).sum(axis=1)
        alive &= ~mdp.done[s, a, k]
        s = mdp.next_states[s, a, k]
        u = rng.random(n)
        a = (u[:, None] >= policy.cum_probs[s]).sum(axis=1)
        a = np.minimum(a, mdp.num_actions - 1)
    mean = sums / n
    var = np.maximum(sq / n - mean**2, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)
