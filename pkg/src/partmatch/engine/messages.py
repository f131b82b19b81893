"""Coordinator/worker message contract and its JSON encoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..model import Correspondence, Entity, MatchResult


@dataclass(frozen=True)
class Join:
    worker_id: str
    thread_count: int
    cache_capacity: int
    channel: Any = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Leave:
    worker_id: str


@dataclass(frozen=True)
class Heartbeat:
    worker_id: str


@dataclass(frozen=True)
class WorkerLost:
    """Raised internally when a transport connection drops."""

    worker_id: str
    reason: str = "connection closed"
    channel: Any = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class AssignTask:
    task_id: str
    partition_ids: tuple[str, ...]
    strategy_id: str


@dataclass(frozen=True)
class Completion:
    worker_id: str
    task_id: str
    result: MatchResult
    cached_partition_ids: tuple[str, ...]
    hits: int
    fetches: int


@dataclass(frozen=True)
class TaskFailed:
    worker_id: str
    task_id: str
    reason: str


@dataclass(frozen=True)
class Shutdown:
    pass


@dataclass(frozen=True)
class Welcome:
    """Sent to remote workers after they join; carries strategy definitions."""

    strategies: dict


def result_to_wire(r: MatchResult) -> dict:
    return {
        "task_id": r.task_id,
        "pairs_compared": r.pairs_compared,
        "elapsed": r.elapsed,
        "correspondences": [[c.a[0], c.a[1], c.b[0], c.b[1], c.sim] for c in r.correspondences],
    }


def result_from_wire(d: dict) -> MatchResult:
    return MatchResult(
        task_id=d["task_id"],
        correspondences=frozenset(
            Correspondence((sa, ia), (sb, ib), sim) for sa, ia, sb, ib, sim in d["correspondences"]
        ),
        pairs_compared=d["pairs_compared"],
        elapsed=d["elapsed"],
    )


def entity_to_wire(e: Entity) -> list:
    return [e.source_id, e.id, e.attributes]


def entity_from_wire(v: list) -> Entity:
    return Entity(v[1], v[0], v[2])


def to_wire(msg: Any) -> dict:
    if isinstance(msg, Join):
        return {"type": "join", "worker_id": msg.worker_id, "thread_count": msg.thread_count,
                "cache_capacity": msg.cache_capacity}
    if isinstance(msg, Leave):
        return {"type": "leave", "worker_id": msg.worker_id}
    if isinstance(msg, Heartbeat):
        return {"type": "heartbeat", "worker_id": msg.worker_id}
    if isinstance(msg, AssignTask):
        return {"type": "assign", "task_id": msg.task_id, "partition_ids": list(msg.partition_ids),
                "strategy_id": msg.strategy_id}
    if isinstance(msg, Completion):
        return {"type": "completion", "worker_id": msg.worker_id, "task_id": msg.task_id,
                "result": result_to_wire(msg.result), "cached": list(msg.cached_partition_ids),
                "hits": msg.hits, "fetches": msg.fetches}
    if isinstance(msg, TaskFailed):
        return {"type": "failed", "worker_id": msg.worker_id, "task_id": msg.task_id, "reason": msg.reason}
    if isinstance(msg, Shutdown):
        return {"type": "shutdown"}
    if isinstance(msg, Welcome):
        return {"type": "welcome", "strategies": msg.strategies}
    raise TypeError(f"cannot encode {type(msg).__name__}")


def from_wire(d: dict) -> Any:
    kind = d.get("type")
    if kind == "join":
        return Join(d["worker_id"], int(d["thread_count"]), int(d["cache_capacity"]))
    if kind == "leave":
        return Leave(d["worker_id"])
    if kind == "heartbeat":
        return Heartbeat(d["worker_id"])
    if kind == "assign":
        return AssignTask(d["task_id"], tuple(d["partition_ids"]), d["strategy_id"])
    if kind == "completion":
        return Completion(d["worker_id"], d["task_id"], result_from_wire(d["result"]),
                          tuple(d["cached"]), int(d["hits"]), int(d["fetches"]))
    if kind == "failed":
        return TaskFailed(d["worker_id"], d["task_id"], d["reason"])
    if kind == "shutdown":
        return Shutdown()
    if kind == "welcome":
        return Welcome(d["strategies"])
    raise ValueError(f"unknown message type {kind!r}")
