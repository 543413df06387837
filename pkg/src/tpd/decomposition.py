"""Turn fixed-horizon GVFs into per-step expected future outcomes.

A fixed-horizon GVF stack ``Q_0 .. Q_{H-1}`` satisfies
``Q_h = Q_{h-1} + gamma**h * O_h`` with ``Q_{-1} = 0``, so the per-step
outcomes come out of a lower-triangular system by forward substitution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from tpd.errors import ConfigError, ShapeError, TaxonomyError

LEARNED = "learned"
ORACLE = "oracle"


def _powers(discount: float, horizon: int) -> np.ndarray:
    return np.power(float(discount), np.arange(horizon, dtype=np.float64))


def _moveaxis_shape(values: np.ndarray, axis: int) -> tuple[np.ndarray, tuple[int, ...]]:
    arr = np.moveaxis(np.asarray(values, dtype=np.float64), axis, 0)
    return arr, (arr.shape[0],) + (1,) * (arr.ndim - 1)


def decompose_fhgvf(values: np.ndarray, discount: float, axis: int = 0) -> np.ndarray:
    """Solve for ``O_h`` given ``Q_{o,0..H-1}`` stacked along ``axis``.

    >>> decompose_fhgvf([0.2, 0.5, 0.5], 1.0).round(12).tolist()
    [0.2, 0.3, 0.0]
    """
    if not 0.0 < discount <= 1.0:
        raise ConfigError(f"discount must lie in (0, 1] to decompose, got {discount}")
    q, shape = _moveaxis_shape(values, axis)
    out = np.empty_like(q)
    out[0] = q[0]
    out[1:] = q[1:] - q[:-1]
    out /= _powers(discount, q.shape[0]).reshape(shape)
    return np.moveaxis(out, 0, axis)


def reconstruct_fhgvf(efos: np.ndarray, discount: float, axis: int = 0) -> np.ndarray:
    """Inverse of :func:`decompose_fhgvf`: ``Q_h = sum_{t<=h} gamma**t O_t``."""
    o, shape = _moveaxis_shape(efos, axis)
    q = np.cumsum(o * _powers(discount, o.shape[0]).reshape(shape), axis=0)
    return np.moveaxis(q, 0, axis)


def remainder_bound(discount: float, horizon: int, reward_bound: float = 1.0) -> float:
    """Bound on the value mass past the horizon, ``gamma**H / (1 - gamma)``.

    Infinite for ``gamma == 1``.
    """
    if discount >= 1.0:
        return math.inf
    return reward_bound * discount**horizon / (1.0 - discount)


@dataclass(frozen=True)
class EfoMatrix:
    outcome_name: str
    values: np.ndarray  # (H,)
    discount: float
    provenance: str = LEARNED

    @property
    def horizon(self) -> int:
        return len(self.values)

    def fhgvf(self) -> np.ndarray:
        return reconstruct_fhgvf(self.values, self.discount)


class TerminatedSplit(NamedTuple):
    raw: np.ndarray  # (H,) 1 - sum of raw event probabilities
    clamped_events: np.ndarray  # (K, H) event probabilities clipped to [0, 1]
    clamped: np.ndarray  # (H,) display value, clip(1 - sum(clamped_events), 0, 1)
    flagged: np.ndarray  # (H,) True where raw values fall outside [0, 1]


def terminated_by_exclusion(event_probs: np.ndarray, tol: float = 1e-9) -> TerminatedSplit:
    """Probability that no event of a complete set happens at each step.

    ``event_probs`` is ``(K, H)``.  Learned tables may produce values outside
    [0, 1]; steps off by more than ``tol`` are flagged and a clipped copy is
    returned for display.
    """
    e = np.atleast_2d(np.asarray(event_probs, dtype=np.float64))
    raw = 1.0 - e.sum(axis=0)
    clamped_events = np.clip(e, 0.0, 1.0)
    clamped = np.clip(1.0 - clamped_events.sum(axis=0), 0.0, 1.0)
    outside = lambda x: (x < -tol) | (x > 1.0 + tol)  # noqa: E731
    flagged = outside(raw) | outside(e).any(axis=0)
    return TerminatedSplit(raw, clamped_events, clamped, flagged)


class RewardReconstruction(NamedTuple):
    components: np.ndarray  # (K, H) r_k * E_{h,k}
    expected_rewards: np.ndarray  # (H,) R_h
    return_profile: np.ndarray  # (H,) cumulative discounted sum of R_h
    value: float  # return_profile[-1]
    occupancies: np.ndarray  # (K,) sum_h gamma^h E_{h,k}
    remainder_bound: float


def reconstruct_rewards(
    event_probs: np.ndarray,
    event_names: Sequence[str],
    reward_map: Mapping[str, float],
    discount: float,
    reward_bound: float = 1.0,
) -> RewardReconstruction:
    """Expected reward per event and step from event probabilities.

    Requires a complete event set where every event has a single reward.
    """
    e = np.atleast_2d(np.asarray(event_probs, dtype=np.float64))
    if e.shape[0] != len(event_names):
        raise ShapeError(f"{e.shape[0]} event rows but {len(event_names)} names")
    missing = [n for n in event_names if n not in reward_map]
    if missing:
        raise TaxonomyError(f"reward map has no entry for {missing}")
    r = np.array([reward_map[n] for n in event_names], dtype=np.float64)
    components = r[:, None] * e
    expected = components.sum(axis=0)
    disc = _powers(discount, e.shape[1])
    profile = np.cumsum(disc * expected)
    return RewardReconstruction(
        components=components,
        expected_rewards=expected,
        return_profile=profile,
        value=float(profile[-1]) if len(profile) else 0.0,
        occupancies=e @ disc,
        remainder_bound=remainder_bound(discount, e.shape[1], reward_bound),
    )


@dataclass(frozen=True)
class Explanation:
    """Everything shown for one state-action pair."""

    state: int
    action: int
    event_names: tuple[str, ...]
    event_probs: np.ndarray  # (K, H) raw
    terminated: TerminatedSplit
    rewards: RewardReconstruction
    discount: float  # control discount used for returns
    event_discount: float  # discount the GVFs were learned with
    provenance: str = LEARNED
    reward_map: Mapping[str, float] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.event_probs.shape[1]

    def efo(self, name: str) -> EfoMatrix:
        k = self.event_names.index(name)
        return EfoMatrix(name, self.event_probs[k], self.event_discount, self.provenance)

    def to_dict(self) -> dict:
        return {
            "state": int(self.state),
            "action": int(self.action),
            "provenance": self.provenance,
            "horizon": self.horizon,
            "discount": self.discount,
            "event_discount": self.event_discount,
            "events": list(self.event_names),
            "reward_map": {k: float(v) for k, v in self.reward_map.items()},
            "event_probabilities": {
                n: self.event_probs[k].tolist() for k, n in enumerate(self.event_names)},
            "event_probabilities_clamped": {
                n: self.terminated.clamped_events[k].tolist() for k, n in enumerate(self.event_names)},
            "terminated": self.terminated.raw.tolist(),
            "terminated_clamped": self.terminated.clamped.tolist(),
            "flagged": self.terminated.flagged.tolist(),
            "reward_components": {
                n: self.rewards.components[k].tolist() for k, n in enumerate(self.event_names)},
            "expected_rewards": self.rewards.expected_rewards.tolist(),
            "return_profile": self.rewards.return_profile.tolist(),
            "value": self.rewards.value,
            "occupancies": {
                n: float(self.rewards.occupancies[k]) for k, n in enumerate(self.event_names)},
            "remainder_bound": _json_float(self.rewards.remainder_bound),
        }


def _json_float(x: float):
    return "inf" if math.isinf(x) else float(x)


def explain(
    fhgvf_values: Mapping[str, np.ndarray],
    state: int,
    action: int,
    reward_map: Mapping[str, float],
    *,
    event_discount: float = 1.0,
    discount: float = 0.99,
    provenance: str = LEARNED,
    reward_bound: float = 1.0,
) -> Explanation:
    """Build an explanation from ``{event: (H, S, A) FHGVF table}``."""
    names = tuple(fhgvf_values)
    if not names:
        raise ConfigError("at least one event table is needed")
    horizons = {np.shape(v)[0] for v in fhgvf_values.values()}
    if len(horizons) != 1:
        raise ShapeError(f"event tables disagree on the horizon: {sorted(horizons)}")
    q = np.stack([np.asarray(fhgvf_values[n])[:, state, action] for n in names])
    probs = decompose_fhgvf(q, event_discount, axis=1)
    return Explanation(
        state=int(state),
        action=int(action),
        event_names=names,
        event_probs=probs,
        terminated=terminated_by_exclusion(probs),
        rewards=reconstruct_rewards(probs, names, reward_map, discount, reward_bound),
        discount=discount,
        event_discount=event_discount,
        provenance=provenance,
        reward_map=dict(reward_map),
    )


class Contrast(NamedTuple):
    fact: Explanation
    foil: Explanation
    event_differences: np.ndarray  # (K, H)
    reward_differences: np.ndarray  # (K, H)
    return_difference: np.ndarray  # (H,) D(h)


def contrastive(fact: Explanation, foil: Explanation) -> Contrast:
    """Per-step differences ``fact - foil`` between two actions in one state."""
    if fact.state != foil.state:
        raise ShapeError(f"contrast needs one state, got {fact.state} and {foil.state}")
    if fact.horizon != foil.horizon:
        raise ShapeError(f"horizons differ: {fact.horizon} vs {foil.horizon}")
    if fact.event_names != foil.event_names:
        raise ShapeError("explanations use different event sets")
    disc = _powers(fact.discount, fact.horizon)
    delta_r = fact.rewards.expected_rewards - foil.rewards.expected_rewards
    return Contrast(
        fact=fact,
        foil=foil,
        event_differences=fact.event_probs - foil.event_probs,
        reward_differences=fact.rewards.components - foil.rewards.components,
        return_difference=np.cumsum(disc * delta_r),
    )
