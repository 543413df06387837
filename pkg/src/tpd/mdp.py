"""Tabular MDP abstractions shared by the learners and the exact oracle.

Transitions are stored as a padded support: for every ``(s, a)`` there are
``K`` branches ``(next_state, probability, reward, done)``.  Branches with
zero probability are padding.  ``done`` marks transitions that end the
episode; the learners never bootstrap through them.

Terminal states are absorbing: every action is allowed, the only branch is a
self-loop with reward 0, and every outcome evaluates to 0 there.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from tpd.errors import (
    ConfigError,
    DistributionError,
    MaskedActionError,
    TerminalStateError,
)

PROB_ATOL = 1e-12

REWARD_COMPONENT = "reward-component"
EVENT_INDICATOR = "event-indicator"


def make_rng(seed: int, purpose: str = "") -> np.random.Generator:
    """Counter-based random stream for ``(seed, purpose)``.

    Distinct purposes (``"train"``, ``"eval"``, ...) give statistically
    independent streams, and the same pair always replays the same numbers.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    key = zlib.crc32(purpose.encode("utf-8"))
    entropy = [seed & 0xFFFFFFFF, seed >> 32, key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class OutcomeSpec:
    """A bounded outcome ``o(s, a, s')``.

    ``reward`` is the deterministic reward attached to an event indicator and
    is only meaningful when ``kind`` is ``"event-indicator"``.
    """

    name: str
    evaluate: Callable[[int, int, int], float]
    kind: str = REWARD_COMPONENT
    reward: float | None = None

    def __post_init__(self):
        if self.kind not in (REWARD_COMPONENT, EVENT_INDICATOR):
            raise ConfigError(f"unknown outcome kind {self.kind!r}")
        if self.kind == EVENT_INDICATOR and self.reward is None:
            raise ConfigError(f"event outcome {self.name!r} needs an associated reward")


@dataclass(frozen=True)
class Transition:
    state: int
    action: int
    next_state: int
    reward: float
    outcomes: Mapping[str, float]
    done: bool


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with an action mask and registered outcome functions.

    Args:
        next_states: ``(S, A, K)`` integer array of successor states.
        probs: ``(S, A, K)`` branch probabilities.
        rewards: ``(S, A, K)`` branch rewards.
        done: ``(S, A, K)`` episode-ending flags.
        valid: ``(S, A)`` action mask.
        terminal: ``(S,)`` absorbing states.
        initial: ``(S,)`` start distribution.
        discount: control discount factor.
        outcomes: outcome specs to precompute over the support.
    """

    next_states: np.ndarray
    probs: np.ndarray
    rewards: np.ndarray
    done: np.ndarray
    valid: np.ndarray
    terminal: np.ndarray
    initial: np.ndarray
    discount: float = 0.99
    outcomes: Sequence[OutcomeSpec] = ()
    action_names: tuple[str, ...] | None = None
    max_episode_steps: int | None = None
    _outcome_tables: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        ns = np.array(self.next_states, dtype=np.int64)
        p = np.array(self.probs, dtype=np.float64)
        r = np.array(self.rewards, dtype=np.float64)
        d = np.array(self.done, dtype=bool)
        valid = np.array(self.valid, dtype=bool)
        term = np.array(self.terminal, dtype=bool)
        init = np.array(self.initial, dtype=np.float64)
        if ns.ndim != 3 or not (ns.shape == p.shape == r.shape == d.shape):
            raise ConfigError("next_states, probs, rewards and done must share shape (S, A, K)")
        S, A, _ = ns.shape
        if valid.shape != (S, A) or term.shape != (S,) or init.shape != (S,):
            raise ConfigError("valid must be (S, A); terminal and initial must be (S,)")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError(f"discount must lie in (0, 1], got {self.discount}")
        if ns.min() < 0 or ns.max() >= S:
            raise ConfigError("next state index out of range")
        if not np.all(np.isfinite(r)):
            raise ConfigError("rewards must be finite")

        # absorbing convention
        ns[term] = np.arange(S)[term, None, None]
        p[term] = 0.0
        p[term, :, 0] = 1.0
        r[term] = 0.0
        d[term] = True
        valid[term] = True

        if np.any(p < 0):
            raise DistributionError("negative transition probability")
        sums = p.sum(axis=2)
        bad = valid & (np.abs(sums - 1.0) > PROB_ATOL)
        if np.any(bad):
            s, a = map(int, np.argwhere(bad)[0])
            raise DistributionError(f"p(.|{s},{a}) sums to {sums[s, a]!r}")
        if not np.all(valid[~term].any(axis=1)):
            raise ConfigError("every nonterminal state needs at least one valid action")
        if np.any(init < 0) or abs(init.sum() - 1.0) > 1e-9:
            raise DistributionError("initial distribution must be a probability vector")
        if np.any(init[term] > 0):
            raise ConfigError("initial distribution puts mass on terminal states")

        # padding and masked rows never contribute
        p[~valid] = 0.0
        p[~valid, 0] = 1.0
        ns = np.where(valid[..., None], ns, np.arange(S)[:, None, None])
        r[~valid] = 0.0
        d[~valid] = True

        names = [o.name for o in self.outcomes]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate outcome names")

        for name, arr in (("next_states", ns), ("probs", p), ("rewards", r), ("done", d),
                          ("valid", valid), ("terminal", term), ("initial", init)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        init_cum = np.cumsum(init)
        init_cum[-1] = 1.0
        init_cum.setflags(write=False)
        object.__setattr__(self, "initial_cum", init_cum)
        cum = np.cumsum(p, axis=2)
        cum[..., -1] = 1.0
        cum.setflags(write=False)
        object.__setattr__(self, "cum_probs", cum)
        for spec in self.outcomes:
            self._outcome_tables[spec.name] = self._tabulate(spec)

    @classmethod
    def from_dict(
        cls,
        num_states: int,
        num_actions: int,
        transitions: Mapping[tuple[int, int], Iterable[tuple]],
        *,
        terminal: Iterable[int] = (),
        initial: Sequence[float] | None = None,
        **kwargs,
    ) -> "TabularMdp":
        """Build from ``{(s, a): [(s', p, r[, done]), ...]}``.

        Pairs missing from ``transitions`` are masked out.  Without an explicit
        ``initial`` the start distribution is uniform over nonterminal states.
        """
        terminal_mask = np.zeros(num_states, dtype=bool)
        terminal_mask[list(terminal)] = True
        width = max([len(list(v)) for v in transitions.values()] + [1])
        shape = (num_states, num_actions, width)
        ns = np.zeros(shape, dtype=np.int64)
        p = np.zeros(shape)
        r = np.zeros(shape)
        d = np.zeros(shape, dtype=bool)
        valid = np.zeros((num_states, num_actions), dtype=bool)
        for (s, a), branches in transitions.items():
            valid[s, a] = True
            for k, branch in enumerate(branches):
                ns[s, a, k] = branch[0]
                p[s, a, k] = branch[1]
                r[s, a, k] = branch[2]
                d[s, a, k] = terminal_mask[branch[0]] or (len(branch) > 3 and bool(branch[3]))
        if initial is None:
            initial = (~terminal_mask).astype(float)
            initial /= initial.sum()
        return cls(ns, p, r, d, valid, terminal_mask, np.asarray(initial, dtype=float), **kwargs)

    @property
    def num_states(self) -> int:
        return self.next_states.shape[0]

    @property
    def num_actions(self) -> int:
        return self.next_states.shape[1]

    @property
    def outcome_names(self) -> tuple[str, ...]:
        return tuple(o.name for o in self.outcomes)

    def outcome(self, name: str) -> OutcomeSpec:
        for spec in self.outcomes:
            if spec.name == name:
                return spec
        raise ConfigError(f"outcome {name!r} is not registered; known: {list(self.outcome_names)}")

    def outcome_table(self, name: str) -> np.ndarray:
        """Outcome values over the padded support, shape ``(S, A, K)``.

        ``"reward"`` is always available and returns the reward table.
        """
        if name in self._outcome_tables:
            return self._outcome_tables[name]
        if name == "reward":
            return self.rewards
        raise ConfigError(f"outcome {name!r} is not registered; known: {list(self.outcome_names)}")

    def with_outcomes(self, *specs: OutcomeSpec) -> "TabularMdp":
        """Copy of this MDP with additional outcomes registered."""
        return TabularMdp(
            self.next_states, self.probs, self.rewards, self.done, self.valid,
            self.terminal, self.initial, discount=self.discount,
            outcomes=tuple(self.outcomes) + tuple(specs),
            action_names=self.action_names, max_episode_steps=self.max_episode_steps,
        )

    def valid_actions(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.valid[s])

    def sample_initial(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self.initial_cum, rng.random(), side="right"))

    def _tabulate(self, spec: OutcomeSpec) -> np.ndarray:
        table = np.zeros(self.probs.shape)
        live = self.valid & ~self.terminal[:, None]
        for s, a in zip(*np.nonzero(live)):
            for k in np.flatnonzero(self.probs[s, a] > 0):
                value = float(spec.evaluate(int(s), int(a), int(self.next_states[s, a, k])))
                if not np.isfinite(value):
                    raise ConfigError(f"outcome {spec.name!r} is unbounded at ({s}, {a})")
                if spec.kind == EVENT_INDICATOR and value not in (0.0, 1.0):
                    raise ConfigError(f"event {spec.name!r} returned {value}, expected 0 or 1")
                table[s, a, k] = value
        table.setflags(write=False)
        return table


def _check_action(mdp: TabularMdp, s: int, a: int) -> None:
    if not 0 <= a < mdp.num_actions or not mdp.valid[s, a]:
        raise MaskedActionError(
            f"action {a} is masked in state {s}; valid actions: {mdp.valid_actions(s).tolist()}")


def sample_transition(mdp: TabularMdp, s: int, a: int, rng: np.random.Generator) -> Transition:
    """Draw ``s' ~ p(.|s, a)`` and evaluate reward and registered outcomes."""
    if mdp.terminal[s]:
        raise TerminalStateError(f"state {s} is terminal")
    _check_action(mdp, s, a)
    k = int(np.searchsorted(mdp.cum_probs[s, a], rng.random(), side="right"))
    k = min(k, mdp.probs.shape[2] - 1)
    outcomes = {n: float(mdp.outcome_table(n)[s, a, k]) for n in mdp.outcome_names}
    return Transition(
        state=int(s),
        action=int(a),
        next_state=int(mdp.next_states[s, a, k]),
        reward=float(mdp.rewards[s, a, k]),
        outcomes=outcomes,
        done=bool(mdp.done[s, a, k]),
    )


def enumerate_transitions(mdp: TabularMdp, s: int, a: int) -> list[tuple[int, float, float, dict]]:
    """Exact support of ``p(.|s, a)`` as ``(s', prob, reward, outcomes)`` tuples."""
    _check_action(mdp, s, a)
    out = []
    for k in np.flatnonzero(mdp.probs[s, a] > 0):
        outcomes = {n: float(mdp.outcome_table(n)[s, a, k]) for n in mdp.outcome_names}
        out.append((int(mdp.next_states[s, a, k]), float(mdp.probs[s, a, k]),
                    float(mdp.rewards[s, a, k]), outcomes))
    return out


@dataclass(frozen=True, eq=False)
class Policy:
    """Tabular stochastic policy ``probs[s, a] = pi(a|s)``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise DistributionError("policy table must be (S, A)")
        for s in range(probs.shape[0]):
            _check_row(probs[s], s)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        cum = np.cumsum(probs, axis=1)
        cum[:, -1] = 1.0
        cum.setflags(write=False)
        object.__setattr__(self, "cum_probs", cum)

    @classmethod
    def deterministic(cls, actions: Sequence[int], num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=np.int64)
        probs = np.zeros((len(actions), num_actions))
        probs[np.arange(len(actions)), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, mdp: TabularMdp) -> "Policy":
        return cls(mdp.valid / mdp.valid.sum(axis=1, keepdims=True))

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    def is_deterministic(self) -> bool:
        return bool(np.all(self.probs.max(axis=1) == 1.0))

    def greedy_actions(self) -> np.ndarray:
        return self.probs.argmax(axis=1)

    def check_mask(self, mdp: TabularMdp) -> None:
        if self.probs.shape != mdp.valid.shape:
            raise DistributionError(
                f"policy shape {self.probs.shape} does not match MDP {mdp.valid.shape}")
        leak = (self.probs > 0) & ~mdp.valid
        if np.any(leak):
            s, a = map(int, np.argwhere(leak)[0])
            raise MaskedActionError(f"policy puts mass on masked action {a} in state {s}")


def _check_row(row: np.ndarray, s: int) -> None:
    if np.any(row < 0) or np.any(row > 1) or abs(row.sum() - 1.0) > PROB_ATOL:
        raise DistributionError(f"pi(.|{s}) is not a distribution (sum={row.sum()!r})")


def policy_sample(policy: Policy | np.ndarray, s: int, rng: np.random.Generator) -> int:
    """Draw ``a ~ pi(.|s)``."""
    row = policy.probs[s] if isinstance(policy, Policy) else np.asarray(policy[s], dtype=float)
    _check_row(row, s)
    cum = np.cumsum(row)
    return int(min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), len(row) - 1))
