"""``partmatch`` command line.

Subcommands::

    partmatch run       [--config FILE] [flags]   plan, match, write artifacts
    partmatch generate  --n N [--miss-rate R]    write a synthetic entity file
    partmatch speedup   [--config FILE] --thread-counts 1,2,4

Exit status: 0 success, 2 usage error, 3 configuration error, 4 input
error, 5 run failure (integrity violation or unfinished tasks).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import yaml

from .config import RunConfig, build_config, load_config_file
from .dataservice import write_entities
from .errors import ConfigurationError, IntegrityError, LoadError, PartialResultsError, PartmatchError
from .harness import check_attributes, execute, load_sources, make_plan, speedup_experiment, write_artifacts
from .synthetic import DRIVE_BLOCK_SIZES, DRIVE_MISC, COLUMNS, generate_synthetic

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_LOAD = 4
EXIT_RUN = 5

# flag dest -> dotted config path
FLAG_PATHS = {
    "input": "input",
    "mode": "mode",
    "max_mem": "sizing.max_mem",
    "max_partition_size": "sizing.m",
    "threads": "environment.threads",
    "workers": "environment.workers",
    "cache": "environment.cache",
    "transport": "environment.transport",
    "compute": "environment.compute",
    "min_size_fraction": "min_size_fraction",
    "strategy": "strategy",
    "seed": "seed",
    "out_dir": "out_dir",
    "blocking_column": "schema.blocking",
    "id_column": "schema.id",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--input", action="append", help="entity file; give twice for two sources")
    p.add_argument("--mode", choices=["sizeBased", "blockingBased"])
    p.add_argument("--max-mem", type=float, help="memory per node in bytes")
    p.add_argument("--max-partition-size", type=int, help="explicit m, bypassing the sizing formula")
    p.add_argument("--threads", type=int, help="threads per worker")
    p.add_argument("--workers", type=int)
    p.add_argument("--cache", type=int, help="partition cache capacity per worker")
    p.add_argument("--transport", choices=["inprocess", "socket"])
    p.add_argument("--compute", choices=["thread", "process"])
    p.add_argument("--min-size-fraction", type=float)
    p.add_argument("--strategy", help="preset (wam, lrm) or a strategy YAML file")
    p.add_argument("--blocking-column")
    p.add_argument("--id-column")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override any config key, e.g. --set environment.heartbeat_timeout=2")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partmatch", description="Partition-parallel entity matching.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="plan and execute a matching workflow")
    _add_run_flags(run)
    run.add_argument("--dry-run", action="store_true", help="write the plan report only")

    gen = sub.add_parser("generate", help="write a synthetic entity file")
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--miss-rate", type=float, default=0.2)
    gen.add_argument("--num-keys", type=int, default=20)
    gen.add_argument("--zipf-exponent", type=float, default=1.1)
    gen.add_argument("--duplicate-rate", type=float, default=0.35)
    gen.add_argument("--drives", action="store_true", help="fixed block sizes 1300/650/450/200/200/200 + 600 misc")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("speedup", help="time one plan at several thread counts")
    _add_run_flags(sp)
    sp.add_argument("--thread-counts", default="1,2,4")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for dest, path in FLAG_PATHS.items():
        value = getattr(args, dest, None)
        if value is not None:
            out[path] = value
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"expected PATH=VALUE, got {item!r}", "--set")
        out[key.strip()] = yaml.safe_load(raw)
    return out


def load_run_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config is not None:
        data = _resolve_paths(load_config_file(args.config), args.config.parent)
    return build_config(data, _overrides(args))


def _resolve_paths(data: dict, base: Path) -> dict:
    """Make file paths in a config file relative to the file's directory."""
    out = dict(data)
    inputs = out.get("input")
    if isinstance(inputs, str):
        inputs = [inputs]
    if isinstance(inputs, list):
        out["input"] = [str(p if Path(p).is_absolute() else base / p) for p in inputs]
    strat = out.get("strategy")
    if isinstance(strat, str) and (base / strat).is_file():
        out["strategy"] = str(base / strat)
    return out


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    store, sources = load_sources(cfg)
    check_attributes(cfg, sources)
    plan = make_plan(cfg, sources)
    out_dir = Path(cfg.out_dir)
    print(
        f"plan: mode={plan.mode} m={plan.max_partition_size} partitions={len(plan.partitions)} "
        f"tasks={len(plan.tasks)} pairs={plan.predicted_pairs()}"
    )
    if args.dry_run:
        write_artifacts(out_dir, plan, None)
        print(f"dry run: plan written to {out_dir / 'plan.json'}")
        return EXIT_OK
    try:
        outcome = execute(cfg, plan, store)
    except PartialResultsError as exc:
        write_artifacts(out_dir, plan, None)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN
    paths = write_artifacts(out_dir, plan, outcome)
    m = outcome.metrics
    print(
        f"matched: {m.correspondence_count} correspondences, {m.pairs_compared} pairs, "
        f"{m.total_elapsed:.3f}s, hit ratio {m.hit_ratio:.3f}"
    )
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    if args.drives:
        n = sum(DRIVE_BLOCK_SIZES.values()) + DRIVE_MISC
        entities = generate_synthetic(n, seed=args.seed, block_sizes=DRIVE_BLOCK_SIZES)
    else:
        try:
            entities = generate_synthetic(
                args.n, seed=args.seed, miss_rate=args.miss_rate, num_keys=args.num_keys,
                zipf_exponent=args.zipf_exponent, duplicate_rate=args.duplicate_rate,
            )
        except ValueError as exc:
            field = "miss_rate" if "miss_rate" in str(exc) else "n"
            raise ConfigurationError(str(exc), field) from None
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        write_entities(fh, entities, COLUMNS)
    print(f"wrote {len(entities)} entities to {args.out}")
    return EXIT_OK


def cmd_speedup(args: argparse.Namespace) -> int:
    try:
        counts = [int(x) for x in args.thread_counts.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(f"not a comma-separated list: {args.thread_counts!r}", "--thread-counts") from None
    cfg = load_run_config(args)
    report = speedup_experiment(cfg, counts)
    print(report.table())
    print(f"identical results across thread counts: {report.identical_results}")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "speedup.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if report.identical_results else EXIT_RUN


COMMANDS = {"run": cmd_run, "generate": cmd_generate, "speedup": cmd_speedup}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LoadError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_LOAD
    except (IntegrityError, PartmatchError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
