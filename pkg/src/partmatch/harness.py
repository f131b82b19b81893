"""Glue between a RunConfig and the library: loading, planning, running,
and the artifacts a run leaves behind."""

from __future__ import annotations

import json
import time
from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path

from .config import RunConfig
from .dataservice import DataStore, write_correspondences
from .engine.coordinator import EngineConfig
from .engine.local import RunOutcome, run_workflow
from .engine.worker import WorkerDescriptor
from .errors import ConfigurationError
from .model import Correspondence, Entity
from .partitioning import (
    MISC,
    SIZE_BASED,
    PartitionPlan,
    blocking_partition,
    plan_two_sources,
    size_based_partition,
)
from .synthetic import generate_synthetic

SOURCE_IDS = ("A", "B")


def load_sources(cfg: RunConfig) -> tuple[DataStore, list[list[Entity]]]:
    """Load the configured inputs, or synthesize one source when none are given."""
    store = DataStore()
    if not cfg.inputs:
        syn = cfg.synthetic
        entities = generate_synthetic(
            int(syn.get("n", 1000)),
            seed=cfg.seed,
            miss_rate=float(syn.get("miss_rate", 0.0)),
            num_keys=int(syn.get("num_keys", 20)),
            zipf_exponent=float(syn.get("zipf_exponent", 1.1)),
            duplicate_rate=float(syn.get("duplicate_rate", 0.35)),
        )
        store.add_entities(entities)
        return store, [entities]
    sources = [None] if len(cfg.inputs) == 1 else list(SOURCE_IDS)
    lists = []
    for path, sid in zip(cfg.inputs, sources):
        source_id = sid or "src"
        store.load_entities(path, cfg.schema, source_id)
        lists.append(store.entities_of(source_id))
    return store, lists


def check_attributes(cfg: RunConfig, sources: Sequence[Sequence[Entity]]) -> None:
    present: set[str] = set()
    for entities in sources:
        for e in entities[:1]:
            present.update(e.attributes)
    if not present:
        return
    cfg.strategy.validate(present)
    if cfg.schema.blocking_column and cfg.schema.blocking_column not in present:
        raise ConfigurationError(f"column {cfg.schema.blocking_column!r} not in input", "schema.blocking")


def make_plan(cfg: RunConfig, sources: Sequence[Sequence[Entity]]) -> PartitionPlan:
    m = cfg.max_partition_size
    sid = cfg.strategy.strategy_id
    if len(sources) == 2:
        return plan_two_sources(
            sources[0], sources[1], cfg.mode, m,
            duplicate_free=cfg.duplicate_free, attribute=cfg.schema.blocking_column,
            min_size=cfg.min_partition_size, strategy_id=sid,
        )
    (entities,) = sources
    if cfg.mode == SIZE_BASED:
        return size_based_partition(entities, m, strategy_id=sid)
    return blocking_partition(
        entities, cfg.schema.blocking_column, m, cfg.min_partition_size, strategy_id=sid
    )


def plan_report(plan: PartitionPlan) -> dict:
    """Partition table and task table as plain data."""
    return {
        "mode": plan.mode,
        "max_partition_size": plan.max_partition_size,
        "min_partition_size": plan.min_partition_size,
        "partition_count": len(plan.partitions),
        "task_count": len(plan.tasks),
        "predicted_pairs": plan.predicted_pairs(),
        "blocks": [
            {"key": None if b.key is MISC else b.key, "misc": b.key is MISC, "size": b.size}
            for b in plan.blocks
        ],
        "partitions": [
            {
                "id": p.partition_id,
                "kind": p.kind.value,
                "size": p.size,
                "source": p.source_id,
                "block_keys": sorted(p.block_keys),
                "misc": p.is_misc,
                "split": [p.split_index, p.split_count] if p.split_count else None,
                "members": [f"{k[0]}:{k[1]}" for k in p.members],
            }
            for p in plan.partitions
        ],
        "tasks": [
            {"id": t.task_id, "a": t.partition_a, "b": t.partition_b, "self": t.self_task, "strategy": t.strategy_id}
            for t in plan.tasks
        ],
    }


def engine_config(cfg: RunConfig) -> EngineConfig:
    env = cfg.environment
    return EngineConfig(
        heartbeat_interval=env.heartbeat_interval,
        heartbeat_timeout=env.heartbeat_timeout,
        membership_timeout=env.membership_timeout,
        affinity=env.affinity,
    )


def workers_for(cfg: RunConfig, threads: int | None = None) -> list[WorkerDescriptor]:
    env = cfg.environment
    return [
        WorkerDescriptor(f"w{i}", threads or env.threads, env.cache) for i in range(env.workers)
    ]


def execute(cfg: RunConfig, plan: PartitionPlan, store: DataStore, threads: int | None = None) -> RunOutcome:
    return run_workflow(
        plan, cfg.strategy, workers_for(cfg, threads), store,
        config=engine_config(cfg), transport=cfg.environment.transport, compute=cfg.environment.compute,
    )


def write_artifacts(out_dir: Path, plan: PartitionPlan, outcome: RunOutcome | None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "plan.json"]
    written[0].write_text(json.dumps(plan_report(plan), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    if outcome is None:
        return written
    corr = out_dir / "correspondences.csv"
    write_correspondences(corr, outcome.correspondences)
    metrics = out_dir / "metrics.json"
    metrics.write_text(outcome.metrics.to_json() + "\n", encoding="utf-8")
    trace = out_dir / "trace.jsonl"
    with open(trace, "w", encoding="utf-8") as fh:
        for ev in outcome.trace:
            fh.write(json.dumps(ev, ensure_ascii=False) + "\n")
    return written + [corr, metrics, trace]


@dataclass(frozen=True)
class SpeedupRow:
    threads: int
    elapsed: float
    speedup: float


@dataclass
class SpeedupReport:
    rows: list[SpeedupRow]
    identical_results: bool
    correspondences: frozenset[Correspondence]

    def table(self) -> str:
        lines = ["threads  elapsed_s  speedup"]
        lines += [f"{r.threads:>7}  {r.elapsed:>9.3f}  {r.speedup:>7.2f}" for r in self.rows]
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "rows": [r.__dict__ for r in self.rows],
            "identical_results": self.identical_results,
            "correspondence_count": len(self.correspondences),
        }


def speedup_experiment(
    cfg: RunConfig,
    thread_counts: Sequence[int],
    *,
    plan: PartitionPlan | None = None,
    store: DataStore | None = None,
) -> SpeedupReport:
    """Run the same plan on one worker at each thread count.

    Speedup is relative to the 1-thread run (measured first if absent from
    ``thread_counts``). Only the matching phase is timed.
    """
    if not thread_counts or min(thread_counts) < 1:
        raise ConfigurationError("thread counts must be positive", "threads")
    if store is None or plan is None:
        store, sources = load_sources(cfg)
        plan = make_plan(cfg, sources)
    counts = list(thread_counts)
    if 1 not in counts:
        counts.insert(0, 1)
    single = replace(cfg, environment=replace(cfg.environment, workers=1))
    elapsed: dict[int, float] = {}
    results: list[frozenset[Correspondence]] = []
    for t in counts:
        if t in elapsed:
            continue
        fresh = DataStore()
        fresh.add_entities(store.entities.values())
        t0 = time.perf_counter()
        outcome = execute(single, plan, fresh, threads=t)
        wall = time.perf_counter() - t0
        elapsed[t] = outcome.metrics.total_elapsed or wall
        results.append(outcome.correspondences)
    base = elapsed[1]
    rows = [SpeedupRow(t, elapsed[t], base / elapsed[t] if elapsed[t] else float("inf")) for t in thread_counts]
    return SpeedupReport(rows, all(r == results[0] for r in results), results[0])

