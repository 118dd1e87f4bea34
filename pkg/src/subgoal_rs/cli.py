"""Command line entry point: ``subgoal-rs {learn,eval,curve,compare}``.

Every failure ends with a single ``error: <kind>: <message>`` line on
stderr and a nonzero exit status, so scripts can grep for it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import MISSING, fields
from pathlib import Path

from subgoal_rs import harness
from subgoal_rs.harness import (
    CadrlPolicy,
    ConfigError,
    EvalSummary,
    ExperimentConfig,
    RunSummary,
    TabularPolicy,
)
from subgoal_rs.learners.cadrl import InitializationFailed
from subgoal_rs.learners.network import TrainingDiverged
from subgoal_rs.scenario import ScenarioError, load_scenario

OUT_ENV = "SUBGOAL_RS_OUT"

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4
EXIT_IO = 5


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0-4"``, ``"1,3,5"`` or a mix such as ``"0-2,7"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return tuple(seeds)


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


_SKIP = {"method", "scenario", "seeds"}


def _add_hyperparameters(p: argparse.ArgumentParser) -> None:
    group = p.add_argument_group("hyperparameters")
    for f in fields(ExperimentConfig):
        if f.name in _SKIP:
            continue
        flag = "--" + f.name.replace("_", "-")
        default = f.default if f.default is not MISSING else None
        if isinstance(default, bool):
            group.add_argument(flag, action=argparse.BooleanOptionalAction, default=None,
                               help=f"(default {default})")
        elif f.name == "hidden":
            group.add_argument(flag, type=_int_tuple, default=None,
                               help=f"hidden layer widths (default {','.join(map(str, default))})")
        elif f.name in ("tabular_rule",):
            group.add_argument(flag, choices=("q", "sarsa"), default=None)
        else:
            cast = int if str(f.type).startswith("int") else float
            group.add_argument(flag, type=cast, default=None, help=f"(default {default})")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="subgoal-rs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    learn = sub.add_parser("learn", help="train one method over several seeds")
    learn.add_argument("--method", required=True, choices=harness.METHODS)
    learn.add_argument("--scenario", required=True,
                       help="scenario file (bare names resolve to the bundled scenarios)")
    learn.add_argument("--seeds", type=parse_seeds, default=None, help="e.g. 0-9 or 1,4,7")
    learn.add_argument("--out", type=Path, default=None,
                       help=f"output directory (else ${OUT_ENV}, else runs/<method>)")
    learn.add_argument("--record", action="store_true", help="also dump per-step trajectories")
    _add_hyperparameters(learn)

    ev = sub.add_parser("eval", help="re-evaluate the frozen policies of a learn run")
    ev.add_argument("run", type=Path, help="directory written by 'learn'")
    ev.add_argument("--episodes", type=int, default=None, help="episodes per seed")
    ev.add_argument("--seeds", type=parse_seeds, default=None, help="subset of the run's seeds")
    ev.add_argument("--out", type=Path, default=None, help="CSV path (default <run>/eval.csv)")
    ev.add_argument("--record", action="store_true", help="dump evaluation trajectories")

    curve = sub.add_parser("curve", help="mean and standard error learning curves")
    curve.add_argument("runs", type=Path, nargs="+")
    curve.add_argument("--window", type=int, default=1, help="trailing moving-average window")
    curve.add_argument("--out", type=Path, default=None)

    cmp_ = sub.add_parser("compare", help="after-learning comparison table")
    cmp_.add_argument("runs", type=Path, nargs="+", help="rows appear in this order")
    cmp_.add_argument("--out", type=Path, default=None)
    return p


def _output_dir(flag: Path | None, fallback: Path) -> Path:
    if flag is not None:
        return flag
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else fallback


def config_from_args(args) -> ExperimentConfig:
    try:
        scenario = load_scenario(args.scenario)
    except FileNotFoundError:
        raise CliError("scenario", f"no such scenario file: {args.scenario}", EXIT_CONFIG)
    except ScenarioError as exc:
        raise CliError("scenario", str(exc), EXIT_CONFIG) from None
    overrides = {}
    for f in fields(ExperimentConfig):
        if f.name in _SKIP:
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    try:
        return ExperimentConfig(args.method, scenario, **overrides)
    except ConfigError as exc:
        raise CliError("config", str(exc), EXIT_CONFIG) from None


def _policy_path(out: Path, seed: int, gridworld: bool) -> Path:
    return out / (f"policy_seed{seed}.csv" if gridworld else f"policy_seed{seed}.net")


def cmd_learn(args) -> int:
    config = config_from_args(args)
    out = _output_dir(args.out, Path("runs") / config.method)
    out.mkdir(parents=True, exist_ok=True)
    try:
        results = harness.run_learning(config, record=args.record)
    except (InitializationFailed, TrainingDiverged) as exc:
        raise CliError(type(exc).__name__, str(exc), EXIT_RUNTIME) from None
    harness.write_json(out / "config.json", config.to_dict())
    rows = [["seed", "n_episodes", "success_rate", "collision_rate", "timeout_rate",
             "nav_time", "total_reward"]]
    for res in results:
        s = res.summary
        harness.write_metrics(out / f"metrics_seed{s.seed}.csv", s.episodes)
        res.policy.save(_policy_path(out, s.seed, config.is_gridworld))
        if s.eval_episodes:
            harness.write_metrics(out / f"eval_seed{s.seed}.csv", s.eval_episodes)
            rows.append(_summary_row(s.seed, s.evaluation))
        if args.record:
            harness.write_trajectories(out / f"trajectories_seed{s.seed}.csv", res.trajectories)
    if len(rows) > 1:
        pooled = EvalSummary.from_episodes([e for r in results for e in r.summary.eval_episodes])
        rows.append(_summary_row("all", pooled))
        harness.write_rows(out / "evaluation.csv", rows)
    print(out)
    return 0


def _summary_row(seed, ev: EvalSummary) -> list:
    return [seed, ev.n_episodes, *(harness.fmt_value(float(v)) for v in (
        ev.success_rate, ev.collision_rate, ev.timeout_rate, ev.nav_time, ev.total_reward))]


def load_run_config(run: Path) -> ExperimentConfig:
    path = run / "config.json"
    if not path.exists():
        raise CliError("io", f"{path} not found; is {run} a learn output directory?", EXIT_IO)
    try:
        return harness.config_from_dict(json.loads(path.read_text()))
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError("config", f"{path}: {exc}", EXIT_CONFIG) from None


def cmd_eval(args) -> int:
    config = load_run_config(args.run)
    seeds = args.seeds or config.seeds
    n = args.episodes if args.episodes is not None else config.eval_episodes
    if n < 1:
        raise CliError("config", "need at least one evaluation episode", EXIT_CONFIG)
    loader = TabularPolicy.load if config.is_gridworld else CadrlPolicy.load
    rows = [["seed", "n_episodes", "success_rate", "collision_rate", "timeout_rate",
             "nav_time", "total_reward"]]
    pooled = []
    for seed in seeds:
        path = _policy_path(args.run, seed, config.is_gridworld)
        if not path.exists():
            raise CliError("io", f"missing policy file {path}", EXIT_IO)
        dumps = [] if args.record else None
        episodes = harness.evaluate_episodes(config, loader(path), n,
                                             harness.seed_streams(seed)[4], args.record, dumps)
        pooled += episodes
        rows.append(_summary_row(seed, EvalSummary.from_episodes(episodes)))
        if args.record:
            harness.write_trajectories(args.run / f"eval_trajectories_seed{seed}.csv", dumps)
    rows.append(_summary_row("all", EvalSummary.from_episodes(pooled)))
    out = args.out or args.run / "eval.csv"
    harness.write_rows(out, rows)
    print(out)
    return 0


def _run_summaries(run: Path, prefix: str) -> tuple[str, list[RunSummary]]:
    config = load_run_config(run)
    out = []
    for seed in config.seeds:
        path = run / f"{prefix}_seed{seed}.csv"
        if not path.exists():
            raise CliError("io", f"missing {path}", EXIT_IO)
        out.append(RunSummary(config.method, seed, harness.read_metrics(path)))
    return config.method, out


def cmd_curve(args) -> int:
    if args.window < 1:
        raise CliError("usage", "--window must be >= 1", EXIT_USAGE)
    rows = []
    for run in args.runs:
        method, summaries = _run_summaries(run, "metrics")
        for row in harness.learning_curve(summaries, args.window):
            rows.append({"method": method, "run": run.name, **row})
    header = list(rows[0])
    out = args.out or _output_dir(None, Path(".")) / "curve.csv"
    harness.write_rows(out, [header] + [[harness.fmt_value(r[h]) for h in header] for r in rows])
    print(out)
    return 0


def cmd_compare(args) -> int:
    results = []
    for run in args.runs:
        method, summaries = _run_summaries(run, "eval")
        results.append((method, EvalSummary.from_episodes(
            [e for s in summaries for e in s.episodes])))
    out = args.out or _output_dir(None, Path(".")) / "comparison.csv"
    harness.write_rows(out, harness.comparison_table(results))
    print(out)
    return 0


COMMANDS = {"learn": cmd_learn, "eval": cmd_eval, "curve": cmd_curve, "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
