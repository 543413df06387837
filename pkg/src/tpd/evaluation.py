"""Learned-versus-exact EFO error metrics over policy-visited states."""

from __future__ import annotations

import bisect
import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from tpd.decomposition import decompose_fhgvf
from tpd.errors import ShapeError
from tpd.mdp import Policy, TabularMdp

METRICS = ("pi_mse", "pibar_mse", "pi_inf", "pibar_inf")
HEADERS = {"pi_mse": "π-MSE", "pibar_mse": "π̄-MSE", "pi_inf": "π-‖·‖∞", "pibar_inf": "π̄-‖·‖∞"}


def collect_eval_states(mdp: TabularMdp, policy: Policy, num_episodes: int,
                        rng: np.random.Generator, max_episode_steps: int | None = None) -> np.ndarray:
    """Sorted unique nonterminal states in which ``policy`` acted over ``num_episodes``."""
    limit = max_episode_steps or mdp.max_episode_steps or np.inf
    pi_cum = policy.cum_probs.tolist()
    cum = mdp.cum_probs.tolist()
    ns = mdp.next_states.tolist()
    done = mdp.done.tolist()
    init_cum = mdp.initial_cum.tolist()
    seen = set()
    for _ in range(num_episodes):
        s = bisect.bisect_right(init_cum, rng.random())
        steps = 0
        while True:
            seen.add(s)
            a = bisect.bisect_right(pi_cum[s], rng.random())
            k = bisect.bisect_right(cum[s][a], rng.random())
            s2, d = ns[s][a][k], done[s][a][k]
            steps += 1
            if d or steps >= limit:
                break
            s = s2
    return np.array(sorted(seen), dtype=np.int64)


def action_buckets(mdp: TabularMdp, policy: Policy, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean ``(len(states), A)`` masks for on-policy and other valid actions."""
    valid = mdp.valid[states]
    on = (policy.probs[states] > 0) & valid
    return on, valid & ~on


def error_metrics(learned_efos: np.ndarray, oracle_efos: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    """MSE and max-abs error pooled over every masked ``(state, action)`` and every step.

    ``learned_efos`` and ``oracle_efos`` are ``(H, n, A)``; ``mask`` is ``(n, A)``.
    """
    if learned_efos.shape != oracle_efos.shape:
        raise ShapeError(f"learned {learned_efos.shape} vs oracle {oracle_efos.shape}")
    err = (learned_efos - oracle_efos)[:, mask]
    if err.size == 0:
        return float("nan"), float("nan")
    return float(np.mean(err**2)), float(np.max(np.abs(err)))


def compute_errors(
    learned: Mapping[str, np.ndarray],
    oracle: Mapping[str, np.ndarray],
    states: np.ndarray,
    policy: Policy,
    mdp: TabularMdp,
    discount: float = 1.0,
) -> dict[str, dict[str, float]]:
    """Per-outcome metrics for one run.

    ``learned`` and ``oracle`` map outcome names to ``(H, S, A)`` FHGVF
    tables learned/computed with ``discount``.
    """
    states = np.asarray(states, dtype=np.int64)
    on, off = action_buckets(mdp, policy, states)
    out = {}
    for name, table in learned.items():
        if name not in oracle:
            raise ShapeError(f"no oracle table for {name!r}")
        if np.shape(table) != np.shape(oracle[name]):
            raise ShapeError(f"{name}: learned {np.shape(table)} vs oracle {np.shape(oracle[name])}")
        le = decompose_fhgvf(np.asarray(table)[:, states], discount)
        oe = decompose_fhgvf(np.asarray(oracle[name])[:, states], discount)
        pi_mse, pi_inf = error_metrics(le, oe, on)
        pibar_mse, pibar_inf = error_metrics(le, oe, off)
        out[name] = {"pi_mse": pi_mse, "pibar_mse": pibar_mse, "pi_inf": pi_inf, "pibar_inf": pibar_inf}
    return out


@dataclass
class EvalReport:
    """Metrics per outcome and run, aggregated as mean and sample std."""

    outcomes: list[str]
    runs: list[dict[str, dict[str, float]]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add_run(self, metrics: dict[str, dict[str, float]]) -> None:
        self.runs.append(metrics)

    def values(self, outcome: str, metric: str) -> np.ndarray:
        return np.array([run[outcome][metric] for run in self.runs])

    def mean(self, outcome: str, metric: str) -> float:
        return float(np.mean(self.values(outcome, metric)))

    def std(self, outcome: str, metric: str) -> float:
        vals = self.values(outcome, metric)
        return float(np.std(vals, ddof=1)) if len(vals) >= 2 else float("nan")

    def summary(self) -> dict:
        return {o: {m: {"mean": self.mean(o, m), "std": self.std(o, m)} for m in METRICS}
                for o in self.outcomes}

    def to_dict(self) -> dict:
        return {
            "outcomes": list(self.outcomes),
            "metrics": list(METRICS),
            "runs": self.runs,
            "summary": _nan_to_none(self.summary()),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(_nan_to_none(self.to_dict()), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["outcome", "run", *METRICS])
        for i, run in enumerate(self.runs):
            for o in self.outcomes:
                w.writerow([o, i, *(repr(run[o][m]) for m in METRICS)])
        for stat in ("mean", "std"):
            for o in self.outcomes:
                fn = self.mean if stat == "mean" else self.std
                w.writerow([o, stat, *(repr(fn(o, m)) for m in METRICS)])
        return buf.getvalue()

    def render_table(self) -> str:
        """Text table with one row per outcome, ``mean ± std`` per metric."""
        rows = [["Outcome", *(HEADERS[m] for m in METRICS)]]
        for o in self.outcomes:
            rows.append([o.capitalize(), *(_pm(self.mean(o, m), self.std(o, m)) for m in METRICS)])
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = [" | ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        lines.insert(1, "-+-".join("-" * w for w in widths))
        return "\n".join(lines)


def _pm(mean: float, std: float) -> str:
    if np.isnan(std):
        return f"{mean:.2e}"
    return f"{mean:.2e} ± {std:.1e}"


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, float) and np.isnan(obj):
        return None
    return obj


def evaluate_runs(
    mdp: TabularMdp,
    policy: Policy,
    learned_runs: Sequence[Mapping[str, np.ndarray]],
    oracle: Mapping[str, np.ndarray],
    num_episodes: int,
    rngs: Sequence[np.random.Generator],
    discount: float = 1.0,
    metadata: dict | None = None,
) -> EvalReport:
    """One metrics row per run; each run collects its own visited states."""
    outcomes = list(learned_runs[0]) if learned_runs else []
    report = EvalReport(outcomes, metadata=dict(metadata or {}))
    sizes = []
    for tables, rng in zip(learned_runs, rngs):
        states = collect_eval_states(mdp, policy, num_episodes, rng)
        sizes.append(len(states))
        report.add_run(compute_errors(tables, oracle, states, policy, mdp, discount))
    report.metadata.setdefault("episodes", num_episodes)
    report.metadata["num_states_visited"] = sizes
    report.metadata.setdefault("pooling", "errors pooled over states, actions and all horizon steps")
    return report
