"""Command line: ``tpd train-policy | train-explainers | explain | evaluate | oracle``.

Exit codes: 0 success, 2 usage or configuration error, 3 unreadable artifact.
``TPD_OUTPUT_DIR`` sets the default output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from tpd import io as tio
from tpd.config import RunConfig
from tpd.control import greedy_policy, train_q_learning
from tpd.decomposition import LEARNED, ORACLE, contrastive, explain
from tpd.errors import ArtifactFormatError, ConfigError, MaskedActionError, TerminalStateError, TPDError
from tpd.evaluation import evaluate_runs
from tpd.fhtd import ExplainerConfig, TrainingLog, policy_hash, train_explainers, write_curve_csv
from tpd.mdp import Policy, make_rng
from tpd.oracle import exact_fhgvf, success_probability, value_iteration
from tpd.svg import grouped_bar_chart, line_chart, stacked_bar_chart
from tpd.taxi import ACTION_NAMES, EVENT_REWARDS, EVENTS, TaxiConfig, build_taxi_mdp, encode_state, render

log = logging.getLogger("tpd")

EXIT_OK, EXIT_USAGE, EXIT_ARTIFACT = 0, 2, 3
MANIFEST = "manifest.json"


def _default_out(sub: str) -> Path:
    return Path(os.environ.get("TPD_OUTPUT_DIR", "tpd_output")) / sub


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _parse_events(values) -> list[str]:
    events = []
    for v in values or []:
        events.extend(x for x in v.split(",") if x)
    bad = [e for e in events if e not in EVENTS]
    if bad:
        raise ConfigError(f"unknown events {bad}; valid events: {', '.join(EVENTS)}")
    return events


def _parse_state(spec: str, env: TaxiConfig) -> int:
    parts = [p.strip() for p in spec.split(",")]
    if len(parts) == 1:
        try:
            state = int(parts[0])
        except ValueError:
            raise ConfigError(f"state {spec!r} is neither an id nor row,col,fuel,passenger") from None
        if not 0 <= state < env.num_states:
            raise ConfigError(f"state id {state} out of range [0, {env.num_states})")
        return state
    if len(parts) != 4:
        raise ConfigError("state tuples are row,col,fuel,passenger")
    flag = parts[3].lower()
    if flag not in ("0", "1", "true", "false"):
        raise ConfigError(f"passenger flag must be 0/1/true/false, got {parts[3]!r}")
    return encode_state((int(parts[0]), int(parts[1]), int(parts[2]), flag in ("1", "true")), env)


def _parse_action(spec: str) -> int:
    if spec in ACTION_NAMES:
        return ACTION_NAMES.index(spec)
    try:
        a = int(spec)
    except ValueError:
        raise ConfigError(f"unknown action {spec!r}; actions: {', '.join(ACTION_NAMES)}") from None
    if not 0 <= a < len(ACTION_NAMES):
        raise ConfigError(f"action index {a} out of range")
    return a


# --------------------------------------------------------------------------- commands


def cmd_train_policy(args) -> int:
    cfg = RunConfig.load(args.config)
    out = Path(args.out or _default_out("policy"))
    out.mkdir(parents=True, exist_ok=True)
    mdp = build_taxi_mdp(cfg.env, register_events=True)
    result = train_q_learning(mdp, cfg.policy, make_rng(args.seed, "policy"))
    policy = greedy_policy(result.q, mdp)
    meta = {"seed": args.seed, "q_learning": cfg.policy.to_dict(),
            "success_probability": success_probability(mdp, policy)}
    tio.write_table(out / "qtable.tpd", result.q)
    tio.write_sidecar(out / "qtable.tpd", {"kind": "qtable", "shape": list(result.q.shape), **meta})
    tio.save_policy(policy, out / "policy.tpd", extra=meta)
    _write_json(out / "env.json", cfg.env.to_dict())
    with open(out / "training_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "episodic_return"])
        w.writerows((step, repr(ret)) for step, ret in result.curve)
    print(f"policy written to {out} (success probability {meta['success_probability']:.4f})")
    return EXIT_OK


def cmd_train_explainers(args) -> int:
    cfg = RunConfig.load(args.config)
    events = _parse_events(args.events) if args.events is not None else list(cfg.events)
    if not events:
        raise ConfigError(f"no events given; valid events: {', '.join(EVENTS)}")
    seeds = args.seeds if args.seeds is not None else list(cfg.seeds)
    xcfg = cfg.explainer
    overrides = {k: v for k, v in (("total_steps", args.steps), ("horizon", args.horizon),
                                   ("curve_every", args.curve_every)) if v is not None}
    if overrides:
        xcfg = ExplainerConfig.from_dict({**xcfg.to_dict(), **overrides})
    env = cfg.env
    env_file = Path(args.policy).parent / "env.json"
    if args.config is None and env_file.exists():
        env = TaxiConfig.from_json(env_file)
    mdp = build_taxi_mdp(env)
    policy = tio.load_policy(args.policy)
    policy.check_mask(mdp)

    out = Path(args.out or _default_out("explainers"))
    out.mkdir(parents=True, exist_ok=True)
    if Path(args.policy).resolve() != (out / "policy.tpd").resolve():
        shutil.copyfile(args.policy, out / "policy.tpd")
        shutil.copyfile(tio.sidecar_path(args.policy), out / "policy.json")
    _write_json(out / "env.json", env.to_dict())
    _write_json(out / MANIFEST, {
        "events": events, "seeds": seeds, "explainer": xcfg.to_dict(),
        "policy": "policy.tpd", "policy_hash": policy_hash(policy), "env": "env.json",
    })
    oracle = None
    if xcfg.curve_every:
        oracle = {e: exact_fhgvf(mdp, policy, e, xcfg.horizon, xcfg.discount) for e in events}
    for seed in seeds:
        seed_dir = out / f"seed{seed}"
        resume = None
        if args.resume:
            resume = {e: tio.load_fhgvf(seed_dir / f"{e}.tpd", policy) for e in events
                      if (seed_dir / f"{e}.tpd").exists()}
        tlog = TrainingLog() if oracle is not None else None
        # a resumed run continues on a fresh stream keyed by the steps already taken
        done_steps = max((t.steps for t in (resume or {}).values()), default=0)
        rng = make_rng(seed, f"explainer/{done_steps}")
        tables = train_explainers(mdp, policy, events, xcfg, rng, tables=resume, oracle=oracle, log=tlog)
        for e, table in tables.items():
            tio.save_fhgvf(table, seed_dir / f"{e}.tpd", seed=seed,
                           extra={"explainer": xcfg.to_dict()})
        if tlog is not None:
            write_curve_csv(seed_dir / "learning_curve.csv", tlog)
        print(f"seed {seed}: {len(tables)} explainers written to {seed_dir}")
    return EXIT_OK


def _load_run(tables_dir: Path):
    try:
        manifest = json.loads((tables_dir / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactFormatError(f"{tables_dir} has no readable {MANIFEST}: {exc}") from exc
    env = TaxiConfig.from_json(tables_dir / manifest.get("env", "env.json"))
    policy = tio.load_policy(tables_dir / manifest.get("policy", "policy.tpd"))
    return manifest, env, policy


def cmd_explain(args) -> int:
    tables_dir = Path(args.tables)
    manifest, env, policy = _load_run(tables_dir)
    mdp = build_taxi_mdp(env)
    events = manifest["events"]
    xcfg = ExplainerConfig.from_dict(manifest["explainer"])
    missing = [e for e in EVENTS if e not in events]
    if missing:
        log.warning("event set is incomplete (missing %s); terminated probabilities are not "
                    "a pure exclusion", missing)
    if args.oracle:
        values = {e: exact_fhgvf(mdp, policy, e, xcfg.horizon, xcfg.discount) for e in events}
        provenance = ORACLE
    else:
        seed = args.seed if args.seed is not None else manifest["seeds"][0]
        values = {e: tio.read_table(tables_dir / f"seed{seed}" / f"{e}.tpd") for e in events}
        provenance = LEARNED
    formats = set(_parse_list(args.format))
    bad = formats - {"json", "csv", "svg"}
    if bad:
        raise ConfigError(f"unknown formats {sorted(bad)}")
    out = Path(args.out or _default_out("explanations"))
    out.mkdir(parents=True, exist_ok=True)
    gamma = mdp.discount

    for spec in args.state:
        s = _parse_state(spec, env)
        if mdp.terminal[s]:
            raise TerminalStateError(f"state {s} is terminal (fuel 0); nothing to explain")
        actions = [_parse_action(a) for a in args.action] if args.action else [int(policy.greedy_actions()[s])]
        for a in actions:
            if not mdp.valid[s, a]:
                valid = ", ".join(ACTION_NAMES[v] for v in mdp.valid_actions(s))
                raise MaskedActionError(f"action {ACTION_NAMES[a]} is masked in state {s}; valid: {valid}")
        exps = [explain(values, s, a, EVENT_REWARDS, event_discount=xcfg.discount,
                        discount=gamma, provenance=provenance) for a in actions]
        for exp in exps:
            _emit_explanation(exp, out, formats, env)
        if args.contrast:
            if len(exps) != 2:
                raise ConfigError("--contrast needs exactly two actions")
            q_r = exact_fhgvf(mdp, policy, "reward", xcfg.horizon, gamma)[-1, s]
            _emit_contrast(contrastive(*exps), out, formats, float(q_r[actions[0]] - q_r[actions[1]]))
    print(f"explanations written to {out}")
    return EXIT_OK


def _stem(exp) -> str:
    return f"s{exp.state}_{ACTION_NAMES[exp.action]}_{exp.provenance}"


def _emit_explanation(exp, out: Path, formats, env: TaxiConfig) -> None:
    stem = _stem(exp)
    if "json" in formats:
        data = exp.to_dict()
        data["action_name"] = ACTION_NAMES[exp.action]
        data["rendered_state"] = render(exp.state, env)
        _write_json(out / f"{stem}.json", data)
    if "csv" in formats or "svg" in formats:
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "event", "probability", "probability_clamped", "expected_reward"])
            for h in range(exp.horizon):
                for k, name in enumerate(exp.event_names):
                    w.writerow([h, name, repr(float(exp.event_probs[k, h])),
                                repr(float(exp.terminated.clamped_events[k, h])),
                                repr(float(exp.rewards.components[k, h]))])
                w.writerow([h, "terminated/unknown", repr(float(exp.terminated.raw[h])),
                            repr(float(exp.terminated.clamped[h])), repr(0.0)])
                w.writerow([h, "total", "", "", repr(float(exp.rewards.expected_rewards[h]))])
    if "svg" in formats:
        label = f"state {exp.state}, {ACTION_NAMES[exp.action]} ({exp.provenance})"
        series = {n: exp.terminated.clamped_events[k] for k, n in enumerate(exp.event_names)}
        series["terminated/unknown"] = exp.terminated.clamped
        (out / f"{stem}_events.svg").write_text(
            stacked_bar_chart(series, f"Probabilities of future events: {label}"))
        comps = {n: exp.rewards.components[k] for k, n in enumerate(exp.event_names)}
        (out / f"{stem}_rewards.svg").write_text(
            grouped_bar_chart(comps, f"Expected reward components: {label}"))


def _emit_contrast(c, out: Path, formats, oracle_difference: float) -> None:
    fact, foil = ACTION_NAMES[c.fact.action], ACTION_NAMES[c.foil.action]
    stem = f"s{c.fact.state}_{fact}_vs_{foil}_{c.fact.provenance}"
    final = float(c.return_difference[-1])
    sign = lambda x: 0 if abs(x) < 1e-9 else (1 if x > 0 else -1)  # noqa: E731
    if "json" in formats:
        _write_json(out / f"{stem}.json", {
            "state": c.fact.state, "fact": fact, "foil": foil, "provenance": c.fact.provenance,
            "event_differences": {n: c.event_differences[k].tolist() for k, n in enumerate(c.fact.event_names)},
            "reward_differences": {n: c.reward_differences[k].tolist() for k, n in enumerate(c.fact.event_names)},
            "return_difference": c.return_difference.tolist(),
            "oracle_fixed_horizon_difference": oracle_difference,
            "sign_matches_oracle": sign(final) == sign(oracle_difference),
        })
    if "csv" in formats or "svg" in formats:
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "event", "probability_difference", "reward_difference"])
            for h in range(len(c.return_difference)):
                for k, name in enumerate(c.fact.event_names):
                    w.writerow([h, name, repr(float(c.event_differences[k, h])),
                                repr(float(c.reward_differences[k, h]))])
                w.writerow([h, "cumulative_return", "", repr(float(c.return_difference[h]))])
    if "svg" in formats:
        (out / f"{stem}_return.svg").write_text(
            line_chart(c.return_difference, f"Expected return difference ({fact} - {foil}), state {c.fact.state}",
                       label=f"{fact} - {foil}"))


def cmd_evaluate(args) -> int:
    tables_dir = Path(args.tables)
    manifest, env, policy = _load_run(tables_dir)
    if args.policy:
        policy = tio.load_policy(args.policy)
    mdp = build_taxi_mdp(env)
    policy.check_mask(mdp)
    xcfg = ExplainerConfig.from_dict(manifest["explainer"])
    runs = 3 if args.fast else args.runs
    seeds = manifest["seeds"][:runs]
    if len(seeds) < runs:
        raise ConfigError(f"{runs} runs requested but only {len(seeds)} seeds were trained")
    events = manifest["events"]
    oracle = {e: exact_fhgvf(mdp, policy, e, xcfg.horizon, xcfg.discount) for e in events}
    learned = [{e: tio.read_table(tables_dir / f"seed{seed}" / f"{e}.tpd") for e in events} for seed in seeds]
    report = evaluate_runs(
        mdp, policy, learned, oracle, args.episodes, [make_rng(seed, "eval") for seed in seeds],
        discount=xcfg.discount,
        metadata={"seeds": seeds, "episodes": args.episodes, "runs": runs,
                  "training_steps": xcfg.total_steps, "horizon": xcfg.horizon,
                  "policy_hash": policy_hash(policy)},
    )
    out = Path(args.out or _default_out("evaluation"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.csv").write_text(report.to_csv())
    table = report.render_table()
    (out / "report.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = RunConfig.load(args.config)
    env = cfg.env
    if args.policy:
        env_file = Path(args.policy).parent / "env.json"
        if args.config is None and env_file.exists():
            env = TaxiConfig.from_json(env_file)
    mdp = build_taxi_mdp(env)
    policy = tio.load_policy(args.policy) if args.policy else value_iteration(mdp)[1]
    events = _parse_events(args.events) if args.events is not None else list(cfg.events)
    if not events:
        raise ConfigError("no events given")
    out = Path(args.out or _default_out("oracle"))
    out.mkdir(parents=True, exist_ok=True)
    for e in events + (["reward"] if args.reward else []):
        disc = mdp.discount if e == "reward" else args.discount
        values = exact_fhgvf(mdp, policy, e, args.horizon, disc)
        tio.write_table(out / f"{e}.tpd", values)
        tio.write_sidecar(out / f"{e}.tpd", {
            "kind": "fhgvf", "outcome": e, "horizon": args.horizon, "discount": disc, "seed": None,
            "steps": 0, "policy_hash": policy_hash(policy), "provenance": ORACLE,
            "shape": list(values.shape)})
    if not args.policy:
        tio.save_policy(policy, out / "policy.tpd", extra={"source": "value_iteration"})
    _write_json(out / "env.json", env.to_dict())
    print(f"oracle tables written to {out}")
    return EXIT_OK


def _parse_list(values) -> list[str]:
    out = []
    for v in values:
        out.extend(x for x in v.split(",") if x)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tpd", description="Temporal policy decomposition workbench")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    tp = sub.add_parser("train-policy", help="train the target policy with masked Q-learning")
    tp.add_argument("--config")
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--out")
    tp.set_defaults(func=cmd_train_policy)

    te = sub.add_parser("train-explainers", help="learn FHGVF tables for events")
    te.add_argument("--policy", required=True)
    te.add_argument("--events", nargs="*", help="event names (space or comma separated)")
    te.add_argument("--config")
    te.add_argument("--seeds", type=int, nargs="+")
    te.add_argument("--steps", type=int, help="override total training steps")
    te.add_argument("--horizon", type=int)
    te.add_argument("--curve-every", type=int, help="write an oracle learning curve every N steps")
    te.add_argument("--resume", action="store_true", help="continue from tables already in --out")
    te.add_argument("--out")
    te.set_defaults(func=cmd_train_explainers)

    ex = sub.add_parser("explain", help="explain state-action pairs")
    ex.add_argument("tables", help="directory written by train-explainers")
    ex.add_argument("--state", action="append", required=True,
                    help="state id or row,col,fuel,passenger (repeatable)")
    ex.add_argument("--action", nargs="+", help="action names or indices (default: policy action)")
    ex.add_argument("--contrast", action="store_true", help="compare the two given actions")
    ex.add_argument("--oracle", action="store_true", help="use exact tables instead of learned ones")
    ex.add_argument("--seed", type=int)
    ex.add_argument("--format", nargs="+", default=["json", "csv"], help="json, csv, svg")
    ex.add_argument("--out")
    ex.set_defaults(func=cmd_explain)

    ev = sub.add_parser("evaluate", help="compare learned and exact EFOs")
    ev.add_argument("tables")
    ev.add_argument("--policy")
    ev.add_argument("--episodes", type=int, default=10_000)
    ev.add_argument("--runs", type=int, default=10)
    ev.add_argument("--fast", action="store_true", help="3 runs")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)

    orc = sub.add_parser("oracle", help="write exact FHGVF tables")
    orc.add_argument("--policy", help="policy table (default: value-iteration optimum)")
    orc.add_argument("--config")
    orc.add_argument("--events", nargs="*")
    orc.add_argument("--horizon", type=int, default=30)
    orc.add_argument("--discount", type=float, default=1.0)
    orc.add_argument("--reward", action="store_true", help="also write the reward FHGVF")
    orc.add_argument("--out")
    orc.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ArtifactFormatError as exc:
        print(f"tpd: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (TPDError, OSError) as exc:
        print(f"tpd: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
