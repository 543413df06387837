"""Q-learning with action masking, and greedy policy extraction."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from tpd.errors import ConfigError
from tpd.mdp import Policy, TabularMdp


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from ``start`` to ``final`` over ``decay_steps``, then flat."""

    start: float = 1.0
    final: float = 0.05
    decay_steps: int = 250_000

    def __call__(self, step: int) -> float:
        if step >= self.decay_steps:
            return self.final
        return self.start + (self.final - self.start) * step / self.decay_steps


@dataclass(frozen=True)
class QLearningConfig:
    total_steps: int = 500_000
    discount: float = 0.99
    learning_rate: float = 0.1
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    max_episode_steps: int | None = None  # falls back to the MDP's own limit

    def __post_init__(self):
        if self.total_steps < 0:
            raise ConfigError("total_steps must be nonnegative")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError("discount must lie in (0, 1]")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("learning_rate must lie in (0, 1]")
        eps = self.epsilon
        if not (0.0 <= eps.final <= eps.start <= 1.0) or eps.decay_steps < 1:
            raise ConfigError("epsilon schedule must decay from start to final within [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "QLearningConfig":
        data = dict(data)
        eps = data.pop("epsilon", None)
        try:
            if eps is not None:
                data["epsilon"] = EpsilonSchedule(**eps)
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "total_steps": self.total_steps,
            "discount": self.discount,
            "learning_rate": self.learning_rate,
            "epsilon": {"start": self.epsilon.start, "final": self.epsilon.final,
                        "decay_steps": self.epsilon.decay_steps},
            "max_episode_steps": self.max_episode_steps,
        }


class QLearningResult(NamedTuple):
    q: np.ndarray  # (S, A)
    curve: list[tuple[int, float]]  # (step at episode end, episodic return)


def masked_argmax(q_row: np.ndarray, valid_row: np.ndarray) -> int:
    """Best valid action, lowest index on ties."""
    return int(np.argmax(np.where(valid_row, q_row, -np.inf)))


def greedy_policy(q: np.ndarray, mdp: TabularMdp) -> Policy:
    """Deterministic argmax policy over valid actions (ties go to the lowest index)."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != mdp.valid.shape:
        raise ConfigError(f"Q table shape {q.shape} does not match MDP {mdp.valid.shape}")
    actions = np.argmax(np.where(mdp.valid, q, -np.inf), axis=1)
    return Policy.deterministic(actions, mdp.num_actions)


def q_learning_update(q: np.ndarray, mdp: TabularMdp, s: int, a: int, r: float, s_next: int,
                      done: bool, alpha: float, discount: float) -> float:
    """One masked Q-learning step in place; returns the new ``q[s, a]``."""
    target = r
    if not done:
        target += discount * float(np.max(q[s_next][mdp.valid[s_next]]))
    q[s, a] += alpha * (target - q[s, a])
    return q[s, a]


def train_q_learning(mdp: TabularMdp, config: QLearningConfig, rng: np.random.Generator) -> QLearningResult:
    """Tabular Q-learning with epsilon-greedy exploration over valid actions."""
    S, A = mdp.num_states, mdp.num_actions
    q = np.zeros((S, A))
    valid_lists = [np.flatnonzero(mdp.valid[s]).tolist() for s in range(S)]
    masked_fill = np.where(mdp.valid, 0.0, -np.inf)
    cum = mdp.cum_probs.tolist()
    ns = mdp.next_states.tolist()
    rew = mdp.rewards.tolist()
    done_t = mdp.done.tolist()
    init_cum = mdp.initial_cum.tolist()
    limit = config.max_episode_steps or mdp.max_episode_steps or np.inf
    alpha, gamma = config.learning_rate, config.discount

    curve: list[tuple[int, float]] = []
    s = bisect.bisect_right(init_cum, rng.random())
    ep_return, ep_len = 0.0, 0
    block = 1 << 16
    u = rng.random((block, 3))
    for step in range(config.total_steps):
        i = step % block
        if i == 0 and step:
            u = rng.random((block, 3))
        u_explore, u_action, u_next = u[i]
        if u_explore < config.epsilon(step):
            va = valid_lists[s]
            a = va[int(u_action * len(va))]
        else:
            a = int(np.argmax(q[s] + masked_fill[s]))
        k = bisect.bisect_right(cum[s][a], u_next)
        s2, r, d = ns[s][a][k], rew[s][a][k], done_t[s][a][k]
        target = r if d else r + gamma * float(np.max(q[s2] + masked_fill[s2]))
        q[s, a] += alpha * (target - q[s, a])
        ep_return += r
        ep_len += 1
        if d or ep_len >= limit:
            curve.append((step + 1, ep_return))
            s = bisect.bisect_right(init_cum, rng.random())
            ep_return, ep_len = 0.0, 0
        else:
            s = s2
    return QLearningResult(q, curve)
