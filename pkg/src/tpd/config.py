"""Run configuration file: environment, learners, events, seeds.

Every section is optional and falls back to the defaults::

    {
      "env": {"traffic_probability": 0.1, "passenger_corner": [4, 0]},
      "policy": {"total_steps": 500000, "epsilon": {"decay_steps": 250000}},
      "explainer": {"horizon": 30, "total_steps": 5000000, "exploration": 0.2},
      "events": ["failure", "dropoff", "pickup", "refuel", "traffic", "move"],
      "seeds": [0, 1, 2],
      "evaluation": {"episodes": 10000, "runs": 10}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from tpd.control import QLearningConfig
from tpd.errors import ConfigError
from tpd.fhtd import ExplainerConfig
from tpd.taxi import EVENTS, TaxiConfig

SECTIONS = {"env", "policy", "explainer", "events", "seeds", "evaluation"}


@dataclass(frozen=True)
class RunConfig:
    env: TaxiConfig = field(default_factory=TaxiConfig)
    policy: QLearningConfig = field(default_factory=QLearningConfig)
    explainer: ExplainerConfig = field(default_factory=ExplainerConfig)
    events: tuple[str, ...] = EVENTS
    seeds: tuple[int, ...] = tuple(range(10))
    eval_episodes: int = 10_000
    eval_runs: int = 10

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(data) - SECTIONS
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        events = tuple(data.get("events", EVENTS))
        bad = [e for e in events if e not in EVENTS]
        if bad:
            raise ConfigError(f"unknown events {bad}; valid events: {list(EVENTS)}")
        evaluation = dict(data.get("evaluation", {}))
        extra = set(evaluation) - {"episodes", "runs"}
        if extra:
            raise ConfigError(f"unknown evaluation keys: {sorted(extra)}")
        seeds = tuple(int(s) for s in data.get("seeds", range(10)))
        return cls(
            env=TaxiConfig.from_dict(data.get("env", {})),
            policy=QLearningConfig.from_dict(data.get("policy", {})),
            explainer=ExplainerConfig.from_dict(data.get("explainer", {})),
            events=events,
            seeds=seeds,
            eval_episodes=int(evaluation.get("episodes", 10_000)),
            eval_runs=int(evaluation.get("runs", 10)),
        )

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    def to_dict(self) -> dict:
        return {
            "env": self.env.to_dict(),
            "policy": self.policy.to_dict(),
            "explainer": self.explainer.to_dict(),
            "events": list(self.events),
            "seeds": list(self.seeds),
            "evaluation": {"episodes": self.eval_episodes, "runs": self.eval_runs},
        }
