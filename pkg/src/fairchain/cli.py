"""Command line entry point: ``fairchain run | check-safety | sweep``.

Every command exits 1 when a safety violation shows up, 2 on bad input and
0 otherwise.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .eventlog import EventLog, check_safety
from .harness import (
    ConfigError,
    ExperimentConfig,
    RunResult,
    emit_results,
    experiment_id,
    run_replicates,
    summarize,
    to_rows,
)
from .scenario import Scenario, load_scenario

EXIT_OK, EXIT_UNSAFE, EXIT_USAGE = 0, 1, 2


def parse_value(text: str) -> int | float | bool | str:
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for convert in (int, float):
        try:
            return convert(text)
        except ValueError:
            pass
    return text


def set_param(config: ExperimentConfig, name: str, value) -> ExperimentConfig:
    """Return ``config`` with the dotted field ``name`` replaced by ``value``."""
    head, _, rest = name.partition(".")
    fields = {f.name for f in dataclasses.fields(config)}
    if head not in fields:
        raise ConfigError(f"unknown parameter {name!r}")
    if rest:
        inner = getattr(config, head)
        if not dataclasses.is_dataclass(inner):
            raise ConfigError(f"{head!r} has no sub-parameters")
        value = set_param(inner, rest, value)
    try:
        return dataclasses.replace(config, **{head: value})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot set {name}={value!r}: {exc}") from exc


def _run_groups(
    configs: Sequence[ExperimentConfig], log_dir: Path | None
) -> list[list[RunResult]]:
    groups = []
    for config in configs:
        results = run_replicates(config, keep_logs=log_dir is not None)
        if log_dir is not None:
            log_dir.mkdir(parents=True, exist_ok=True)
            for r in results:
                r.log.write(log_dir / f"{experiment_id(config)}-r{r.replicate}.tsv")
                r.log = None
        groups.append(results)
    return groups


def _report(
    groups: list[list[RunResult]], labels: Sequence[str], column_title: str, out: Path | None
) -> int:
    summaries = [summarize(g, label) for g, label in zip(groups, labels)]
    rows = to_rows([r for g in groups for r in g])
    if out is not None:
        summary_path = emit_results(rows, out, summaries, column_title)
        print(f"wrote {out} and {summary_path}")
    print(f"{column_title:>16} " + " ".join(f"{s.label:>8}" for s in summaries))
    for title, attr in (
        ("Blocks added", "blocks_added"),
        ("Diversity", "proposer_diversity"),
        ("Nodes in sync", "nodes_in_sync"),
    ):
        print(f"{title:>16} " + " ".join(f"{getattr(s, attr):8.1f}" for s in summaries))
    unsafe = sum(s.safety_violations for s in summaries)
    print(f"{'Safety':>16} " + " ".join(f"{s.safety_violations:8d}" for s in summaries))
    return EXIT_UNSAFE if unsafe else EXIT_OK


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if args.seed is not None:
        config = config.with_(rng_seed=args.seed)
    if args.replicates is not None:
        config = config.with_(replicates=args.replicates)
    return config


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    scenario = dataclasses.replace(scenario, config=_apply_overrides(scenario.config, args))
    configs = scenario.groups()
    for c in configs:
        c.validate()
    groups = _run_groups(configs, args.log_dir)
    labels = [scenario.column_label(c) for c in configs]
    return _report(groups, labels, scenario.column_title, args.out)


def cmd_sweep(args: argparse.Namespace) -> int:
    base = load_scenario(args.scenario).config if args.scenario else ExperimentConfig(name="sweep")
    base = _apply_overrides(base, args)
    values = [parse_value(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values needs at least one value")
    configs = [set_param(base, args.param, v) for v in values]
    for c in configs:
        c.validate()
    groups = _run_groups(configs, args.log_dir)
    return _report(groups, [str(v) for v in values], args.param, args.out)


def cmd_check_safety(args: argparse.Namespace) -> int:
    log = EventLog.read(args.log)
    violations = check_safety(log)
    print(f"{args.log}: {violations} safety violation(s) across {len(log.honest_nodes())} honest nodes")
    return EXIT_UNSAFE if violations else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairchain", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every replicate")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, help="override the scenario rng_seed")
        p.add_argument("--replicates", type=int, help="override the replicate count")
        p.add_argument("--out", type=Path, help="per-replicate CSV; a _summary.csv is written beside it")
        p.add_argument("--log-dir", type=Path, help="write one event log per replicate here")

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("--scenario", required=True, type=Path)
    experiment_options(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="vary one parameter over a list of values")
    sweep.add_argument("--param", required=True, help="dotted field name, e.g. topology.fanout")
    sweep.add_argument("--values", required=True, help="comma separated values")
    sweep.add_argument("--scenario", type=Path, help="base configuration (defaults otherwise)")
    experiment_options(sweep)
    sweep.set_defaults(func=cmd_sweep)

    check = sub.add_parser("check-safety", help="count conflicting commits in an event log")
    check.add_argument("--log", required=True, type=Path)
    check.set_defaults(func=cmd_check_safety)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"fairchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
