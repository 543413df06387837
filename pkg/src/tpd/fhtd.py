"""Off-policy fixed-horizon TD learning of per-outcome GVF stacks.

Horizon index ``h`` stores ``Q_{o,h} = E[sum_{t=0}^{h} gamma^t o_t]``, i.e.
``h + 1`` outcome terms, with ``Q_{o,-1} = 0``.  Every transition updates all
``H`` levels: level ``h`` bootstraps from level ``h - 1`` at
``(s', a')`` with ``a' ~ pi(.|s')``.
"""

from __future__ import annotations

import bisect
import csv
import hashlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from tpd.decomposition import LEARNED, EfoMatrix, decompose_fhgvf
from tpd.errors import ConfigError, ShapeError
from tpd.mdp import Policy, TabularMdp, Transition, policy_sample

CONSTANT = "constant"
POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class LearningRateSchedule:
    """Step size as a function of how often ``(s, a)`` was updated before.

    ``polynomial`` gives ``1 / (1 + n)**exponent``; with ``exponent`` in
    (0.5, 1] the steps sum to infinity while their squares do not.
    """

    kind: str = CONSTANT
    rate: float = 0.1
    exponent: float = 0.7

    def __post_init__(self):
        if self.kind == CONSTANT:
            if not 0.0 < self.rate <= 1.0:
                raise ConfigError("constant learning rate must lie in (0, 1]")
        elif self.kind == POLYNOMIAL:
            if not 0.5 < self.exponent <= 1.0:
                raise ConfigError("polynomial exponent must lie in (0.5, 1]")
        else:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")

    def __call__(self, visits: int | np.ndarray):
        if np.ndim(visits) == 0:
            if self.kind == CONSTANT:
                return self.rate
            return 1.0 / (1.0 + int(visits)) ** self.exponent
        if self.kind == CONSTANT:
            return np.full(np.shape(visits), self.rate)
        return 1.0 / (1.0 + np.asarray(visits, dtype=np.float64)) ** self.exponent

    @property
    def robbins_monro(self) -> bool:
        """Whether the steps sum to infinity with square-summable steps."""
        return self.kind == POLYNOMIAL and 0.5 < self.exponent <= 1.0


@dataclass(frozen=True, eq=False)
class BehaviorPolicy:
    """Follows ``base`` but picks a uniform valid action with probability ``epsilon``."""

    base: Policy
    epsilon: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")

    def probs(self, mdp: TabularMdp) -> np.ndarray:
        uniform = mdp.valid / mdp.valid.sum(axis=1, keepdims=True)
        return (1.0 - self.epsilon) * self.base.probs + self.epsilon * uniform

    def as_policy(self, mdp: TabularMdp) -> Policy:
        return Policy(self.probs(mdp))


def policy_hash(policy: Policy) -> str:
    return hashlib.sha256(np.ascontiguousarray(policy.probs, dtype="<f8").tobytes()).hexdigest()


@dataclass(eq=False)
class FhgvfTable:
    """Learned ``Q_{o,h}(s, a)`` for one outcome, shape ``(H, S, A)``."""

    outcome_name: str
    values: np.ndarray
    discount: float = 1.0
    target_policy: Policy | None = None
    visits: np.ndarray | None = None
    steps: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[0] < 1:
            raise ConfigError("an FHGVF table needs shape (H, S, A) with H >= 1")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError("outcome discount must lie in (0, 1]")
        if self.visits is None:
            self.visits = np.zeros(self.values.shape[1:], dtype=np.int64)

    @classmethod
    def zeros(cls, outcome_name: str, horizon: int, num_states: int, num_actions: int,
              discount: float = 1.0, target_policy: Policy | None = None) -> "FhgvfTable":
        if horizon < 1:
            raise ConfigError("horizon must be positive")
        return cls(outcome_name, np.zeros((horizon, num_states, num_actions)), discount, target_policy)

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    def efo(self, state: int, action: int) -> EfoMatrix:
        return EfoMatrix(self.outcome_name,
                         decompose_fhgvf(self.values[:, state, action], self.discount),
                         self.discount, LEARNED)

    def efos(self) -> np.ndarray:
        return decompose_fhgvf(self.values, self.discount)


def fhtd_update(
    table: FhgvfTable,
    tr: Transition,
    schedule: LearningRateSchedule,
    rng: np.random.Generator | None = None,
    *,
    next_action: int | None = None,
    expected_backup: bool = False,
) -> FhgvfTable:
    """Apply one FHTD step to every horizon level of ``table`` in place.

    The bootstrap action is ``next_action`` when given, otherwise drawn from
    the table's target policy with ``rng``.  With ``expected_backup`` the
    bootstrap averages over the target policy instead.
    """
    H = table.horizon
    if H < 1:
        raise ConfigError("horizon must be positive")
    o = tr.reward if table.outcome_name == "reward" and "reward" not in tr.outcomes \
        else tr.outcomes[table.outcome_name]
    s, a = tr.state, tr.action
    target = np.full(H, o, dtype=np.float64)
    if not tr.done and H > 1:
        if expected_backup:
            boot = table.values[:-1, tr.next_state, :] @ table.target_policy.probs[tr.next_state]
        else:
            if next_action is None:
                if rng is None or table.target_policy is None:
                    raise ConfigError("sampling a bootstrap action needs rng and a target policy")
                next_action = policy_sample(table.target_policy, tr.next_state, rng)
            boot = table.values[:-1, tr.next_state, next_action]
        target[1:] = o + table.discount * boot
    alpha = schedule(int(table.visits[s, a]))
    q = table.values[:, s, a]
    table.values[:, s, a] = q + alpha * (target - q)
    table.visits[s, a] += 1
    table.steps += 1
    return table


@dataclass(frozen=True)
class ExplainerConfig:
    horizon: int = 30
    total_steps: int = 5_000_000
    discount: float = 1.0
    schedule: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    exploration: float = 0.2
    shared_trajectories: bool = True
    expected_backup: bool = False
    max_episode_steps: int | None = None
    curve_every: int = 0  # oracle-error checkpoints, 0 disables

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be nonnegative")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError("outcome discount must lie in (0, 1]")
        if not 0.0 <= self.exploration <= 1.0:
            raise ConfigError("exploration must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "ExplainerConfig":
        data = dict(data)
        sched = data.pop("schedule", None)
        try:
            if sched is not None:
                data["schedule"] = LearningRateSchedule(**sched)
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "total_steps": self.total_steps,
            "discount": self.discount,
            "schedule": {"kind": self.schedule.kind, "rate": self.schedule.rate,
                         "exponent": self.schedule.exponent},
            "exploration": self.exploration,
            "shared_trajectories": self.shared_trajectories,
            "expected_backup": self.expected_backup,
            "max_episode_steps": self.max_episode_steps,
            "curve_every": self.curve_every,
        }


@dataclass
class TrainingLog:
    """Optional diagnostics collected while training."""

    curve: list[tuple[int, str, float, float]] = field(default_factory=list)  # step, outcome, max err, mse
    transitions: list[tuple[int, int, int, bool, int]] | None = None  # s, a, s', done, a'


def train_explainers(
    mdp: TabularMdp,
    policy: Policy,
    outcomes: Sequence[str],
    config: ExplainerConfig,
    rng: np.random.Generator,
    *,
    tables: Mapping[str, FhgvfTable] | None = None,
    oracle: Mapping[str, np.ndarray] | None = None,
    log: TrainingLog | None = None,
) -> dict[str, FhgvfTable]:
    """Learn one FHGVF table per outcome from behavior-policy experience.

    With ``shared_trajectories`` every outcome learns from the same stream of
    transitions; otherwise each outcome gets its own child stream of ``rng``.
    ``tables`` resumes training from earlier tables.  ``oracle`` maps outcome
    names to exact ``(H, S, A)`` values for the optional error curve.
    """
    outcomes = list(outcomes)
    if not outcomes:
        raise ConfigError("no outcomes to learn")
    for name in outcomes:
        mdp.outcome_table(name)  # raises for unregistered outcomes
    policy.check_mask(mdp)
    shape = (config.horizon, mdp.num_states, mdp.num_actions)
    current = {}
    for name in outcomes:
        if tables is not None and name in tables:
            t = tables[name]
            if t.values.shape != shape:
                raise ShapeError(f"resumed table {name!r} has shape {t.values.shape}, expected {shape}")
            visits = t.visits.copy() if t.visits is not None else np.zeros(shape[1:], dtype=np.int64)
            current[name] = FhgvfTable(name, t.values.copy(), t.discount, policy, visits, t.steps)
        else:
            current[name] = FhgvfTable.zeros(name, *shape, discount=config.discount, target_policy=policy)

    if config.shared_trajectories:
        _run(mdp, policy, [current[n] for n in outcomes], config, rng, oracle, log)
    else:
        for name, child in zip(outcomes, rng.spawn(len(outcomes))):
            _run(mdp, policy, [current[name]], config, child, oracle, log)
    return current


def train_explainer(mdp: TabularMdp, policy: Policy, outcome: str, config: ExplainerConfig,
                    rng: np.random.Generator, **kwargs) -> FhgvfTable:
    return train_explainers(mdp, policy, [outcome], config, rng, **kwargs)[outcome]


def _run(mdp, policy, tables, config, rng, oracle, log) -> None:
    S, A = mdp.num_states, mdp.num_actions
    H = config.horizon
    gamma = tables[0].discount
    # working layout (S, A, K, H) keeps the block touched per step contiguous
    work = np.ascontiguousarray(np.stack([t.values for t in tables]).transpose(2, 3, 0, 1))
    visits = tables[0].visits.copy()
    otab = np.ascontiguousarray(
        np.stack([mdp.outcome_table(t.outcome_name) for t in tables]).transpose(1, 2, 3, 0))
    valid_lists = [np.flatnonzero(mdp.valid[s]).tolist() for s in range(S)]
    pi_cum = policy.cum_probs.tolist()
    pi_probs = policy.probs
    cum = mdp.cum_probs.tolist()
    ns = mdp.next_states.tolist()
    done_t = mdp.done.tolist()
    init_cum = mdp.initial_cum.tolist()
    limit = config.max_episode_steps or mdp.max_episode_steps or np.inf
    eps = config.exploration
    schedule = config.schedule
    constant = schedule.kind == CONSTANT
    rate = schedule.rate
    expo = schedule.exponent
    expected = config.expected_backup
    record = log.transitions if log is not None else None
    every = config.curve_every if (oracle is not None and log is not None) else 0
    target = np.empty((len(tables), H))

    s = bisect.bisect_right(init_cum, rng.random())
    ep_len = 0
    block = 1 << 16
    u = rng.random((block, 4))
    for step in range(config.total_steps):
        i = step % block
        if i == 0 and step:
            u = rng.random((block, 4))
        u_explore, u_action, u_next, u_boot = u[i]
        if u_explore < eps:
            va = valid_lists[s]
            a = va[int(u_action * len(va))]
        else:
            a = bisect.bisect_right(pi_cum[s], u_action)
        k = bisect.bisect_right(cum[s][a], u_next)
        s2, d = ns[s][a][k], done_t[s][a][k]
        o = otab[s, a, k]
        target[:] = o[:, None]
        a2 = -1
        if not d and H > 1:
            if expected:
                target[:, 1:] += gamma * (work[s2, :, :, :-1] * pi_probs[s2][:, None, None]).sum(axis=0)
            else:
                a2 = bisect.bisect_right(pi_cum[s2], u_boot)
                target[:, 1:] += gamma * work[s2, a2, :, :-1]
        n = int(visits[s, a])
        alpha = rate if constant else 1.0 / (1.0 + n) ** expo
        q = work[s, a]
        q += alpha * (target - q)
        visits[s, a] = n + 1
        if record is not None:
            record.append((s, a, s2, bool(d), a2))
        ep_len += 1
        if d or ep_len >= limit:
            s = bisect.bisect_right(init_cum, rng.random())
            ep_len = 0
        else:
            s = s2
        if every and (step + 1) % every == 0:
            _checkpoint(log, tables, work, oracle, mdp, step + 1)

    for j, t in enumerate(tables):
        t.values = np.ascontiguousarray(work[:, :, j, :].transpose(2, 0, 1))
        t.visits = visits.copy()
        t.steps += config.total_steps


def _checkpoint(log, tables, work, oracle, mdp, step) -> None:
    live = mdp.valid & ~mdp.terminal[:, None]
    for j, t in enumerate(tables):
        if t.outcome_name not in oracle:
            continue
        err = (work[:, :, j, :].transpose(2, 0, 1) - oracle[t.outcome_name])[:, live]
        log.curve.append((t.steps + step, t.outcome_name, float(np.abs(err).max()),
                          float(np.mean(err**2))))


def write_curve_csv(path, log: TrainingLog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "outcome", "max_abs_error", "mse"])
        for row in log.curve:
            w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])


def make_transition(mdp: TabularMdp, s: int, a: int, s_next: int, done: bool) -> Transition:
    """Rebuild a :class:`Transition` for a support entry ``(s, a, s_next)``."""
    k = int(np.flatnonzero((mdp.next_states[s, a] == s_next) & (mdp.probs[s, a] > 0))[0])
    return Transition(s, a, s_next, float(mdp.rewards[s, a, k]),
                      {n: float(mdp.outcome_table(n)[s, a, k]) for n in mdp.outcome_names}, done)


__all__ = [
    "BehaviorPolicy", "ExplainerConfig", "FhgvfTable", "LearningRateSchedule", "TrainingLog",
    "fhtd_update", "make_transition", "policy_hash", "train_explainer", "train_explainers",
    "write_curve_csv",
]
