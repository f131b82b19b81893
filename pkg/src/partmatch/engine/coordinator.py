"""Workflow coordinator: owns the task list, the approximate cache-status map
and worker membership. All state changes happen in :meth:`Coordinator.handle`,
which is driven by one thread draining the inbox.
"""

from __future__ import annotations

import bisect
import logging
import queue
import time
from collections import Counter
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from ..dataservice import DataStore
from ..errors import IntegrityError, PartialResultsError, PartmatchError
from ..metrics import RunMetrics
from ..model import MatchTask, merge_results
from .messages import (
    AssignTask,
    Completion,
    Heartbeat,
    Join,
    Leave,
    Shutdown,
    TaskFailed,
    WorkerLost,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    heartbeat_interval: float = 1.0
    heartbeat_timeout: float = 5.0
    # Abort when open tasks remain and no live worker has been around this long.
    membership_timeout: float = 30.0
    affinity: bool = True
    max_task_failures: int = 3
    tick: float = 0.05


class TaskList:
    """Open / in-flight / completed task bookkeeping.

    Open tasks stay sorted by creation order; a partition → open-task index
    keeps affinity lookups proportional to the cache size rather than the
    number of open tasks.
    """

    def __init__(self, tasks: Sequence[MatchTask]) -> None:
        self.tasks: dict[str, MatchTask] = {}
        self.position: dict[str, int] = {}
        for n, t in enumerate(tasks):
            if t.task_id in self.tasks:
                raise IntegrityError(f"duplicate task {t.task_id}")
            self.tasks[t.task_id] = t
            self.position[t.task_id] = n
        self._open_pos: list[int] = list(range(len(tasks)))
        self._by_pos: list[MatchTask] = list(tasks)
        self._by_partition: dict[str, set[str]] = {}
        for t in tasks:
            self._index(t)
        self.in_flight: dict[str, str] = {}
        self.completed: set[str] = set()

    def _index(self, t: MatchTask) -> None:
        for pid in t.partition_ids:
            self._by_partition.setdefault(pid, set()).add(t.task_id)

    def _unindex(self, t: MatchTask) -> None:
        for pid in t.partition_ids:
            self._by_partition[pid].discard(t.task_id)

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def open(self) -> list[MatchTask]:
        return [self._by_pos[p] for p in self._open_pos]

    @property
    def open_count(self) -> int:
        return len(self._open_pos)

    def is_open(self, task_id: str) -> bool:
        pos = self.position[task_id]
        i = bisect.bisect_left(self._open_pos, pos)
        return i < len(self._open_pos) and self._open_pos[i] == pos

    def open_with(self, partition_id: str) -> set[str]:
        return self._by_partition.get(partition_id, set())

    def first_open(self) -> MatchTask | None:
        return self._by_pos[self._open_pos[0]] if self._open_pos else None

    def _remove_open(self, task_id: str) -> None:
        pos = self.position[task_id]
        i = bisect.bisect_left(self._open_pos, pos)
        del self._open_pos[i]
        self._unindex(self.tasks[task_id])

    def assign(self, task_id: str, worker_id: str) -> MatchTask:
        self._remove_open(task_id)
        self.in_flight[task_id] = worker_id
        return self.tasks[task_id]

    def requeue(self, task_id: str) -> None:
        if task_id in self.completed or self.is_open(task_id):
            return
        self.in_flight.pop(task_id, None)
        bisect.insort(self._open_pos, self.position[task_id])
        self._index(self.tasks[task_id])

    def complete(self, task_id: str) -> bool:
        """Mark done; ``False`` if it already was."""
        if task_id in self.completed:
            return False
        if task_id in self.in_flight:
            del self.in_flight[task_id]
        elif self.is_open(task_id):
            self._remove_open(task_id)
        self.completed.add(task_id)
        return True


def select_task(
    worker_id: str,
    task_list: TaskList,
    cache_status: Mapping[str, Iterable[str]],
    affinity: bool = True,
) -> MatchTask | None:
    """Pick the open task with the most input partitions cached at the worker.

    Ties go to the earliest-created task; without cache information this is
    plain FIFO. The chosen task moves to in-flight.
    """
    first = task_list.first_open()
    if first is None:
        return None
    best = first
    cached = cache_status.get(worker_id) if affinity else None
    if cached:
        cached = set(cached)
        best_key = (0, task_list.position[first.task_id])
        candidates = set()
        for pid in cached:
            candidates |= task_list.open_with(pid)
        for tid in candidates:
            t = task_list.tasks[tid]
            score = sum(1 for pid in t.partition_ids if pid in cached)
            key = (-score, task_list.position[tid])
            if key < best_key:
                best_key, best = key, t
    task_list.assign(best.task_id, worker_id)
    return best


def affinity_of(task: MatchTask, cached: Iterable[str]) -> int:
    cached = set(cached)
    return sum(1 for pid in task.partition_ids if pid in cached)


@dataclass
class WorkerState:
    worker_id: str
    thread_count: int
    cache_capacity: int
    channel: Any
    last_seen: float
    free_slots: int = 0
    in_flight: set[str] = field(default_factory=set)
    alive: bool = True
    leaving: bool = False
    busy_time: float = 0.0


class TraceLog:
    """Scheduling audit trail: one dict per event."""

    def __init__(self, clock: Callable[[], float] = time.monotonic) -> None:
        self.events: list[dict] = []
        self._clock = clock
        self._t0 = clock()

    def record(self, event: str, **fields: Any) -> None:
        self.events.append({"t": round(self._clock() - self._t0, 6), "event": event, **fields})

    def of(self, event: str) -> list[dict]:
        return [e for e in self.events if e["event"] == event]


class Coordinator:
    def __init__(
        self,
        tasks: Sequence[MatchTask],
        store: DataStore,
        *,
        config: EngineConfig | None = None,
        partition_count: int = 0,
        on_progress: Callable[[int, int], None] | None = None,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.config = config or EngineConfig()
        self.store = store
        self.task_list = TaskList(tasks)
        self.cache_status: dict[str, frozenset[str]] = {}
        self.workers: dict[str, WorkerState] = {}
        self.inbox: queue.Queue = queue.Queue()
        self.trace = TraceLog(clock)
        self.partition_count = partition_count
        self.on_progress = on_progress
        self.clock = clock
        self.cache_hits = 0
        self.reported_fetches = 0
        self.failures: Counter[str] = Counter()
        self._fetches_at_start = store.total_fetches
        self._started: float | None = None
        self._finished: float | None = None
        self._no_worker_since: float | None = None

    # -- messaging ---------------------------------------------------------
    def post(self, msg: Any) -> None:
        self.inbox.put(msg)

    @property
    def done(self) -> bool:
        return len(self.task_list.completed) == len(self.task_list)

    def alive_workers(self) -> list[WorkerState]:
        return [w for w in self.workers.values() if w.alive]

    def handle(self, msg: Any) -> None:
        ws = self.workers.get(getattr(msg, "worker_id", None))
        if ws is not None and ws.alive:
            ws.last_seen = self.clock()
        if isinstance(msg, Completion):
            self.on_completion(msg)
        elif isinstance(msg, Heartbeat):
            pass
        elif isinstance(msg, Join):
            self.add_worker(msg)
        elif isinstance(msg, Leave):
            self.remove_worker(msg.worker_id)
        elif isinstance(msg, TaskFailed):
            self._on_task_failed(msg)
        elif isinstance(msg, WorkerLost):
            if ws is not None and ws.alive and (msg.channel is None or msg.channel is ws.channel):
                log.warning("worker %s lost: %s", msg.worker_id, msg.reason)
                self.handle_worker_failure(msg.worker_id)
        else:
            raise TypeError(f"unexpected message {msg!r}")

    def _send(self, ws: WorkerState, msg: Any) -> bool:
        try:
            ws.channel.send(msg)
            return True
        except (OSError, ValueError) as exc:
            log.warning("send to %s failed: %s", ws.worker_id, exc)
            return False

    # -- scheduling --------------------------------------------------------
    def schedule(self, ws: WorkerState) -> None:
        while ws.alive and not ws.leaving and ws.free_slots > 0:
            cached = self.cache_status.get(ws.worker_id, frozenset())
            task = select_task(ws.worker_id, self.task_list, self.cache_status, self.config.affinity)
            if task is None:
                return
            ws.free_slots -= 1
            ws.in_flight.add(task.task_id)
            self.trace.record(
                "assign", task=task.task_id, worker=ws.worker_id, affinity=affinity_of(task, cached)
            )
            if not self._send(ws, AssignTask(task.task_id, task.partition_ids, task.strategy_id)):
                self.handle_worker_failure(ws.worker_id)
                return

    def schedule_all(self) -> None:
        for ws in list(self.workers.values()):
            self.schedule(ws)

    def on_completion(self, msg: Completion) -> None:
        tid = msg.task_id
        self.cache_hits += msg.hits
        self.reported_fetches += msg.fetches
        self.store.store_result(msg.result)
        first = self.task_list.complete(tid)
        self.trace.record(
            "complete" if first else "duplicate",
            task=tid, worker=msg.worker_id, hits=msg.hits, fetches=msg.fetches,
        )
        if first and self.on_progress is not None:
            self.on_progress(len(self.task_list.completed), len(self.task_list))
        ws = self.workers.get(msg.worker_id)
        if ws is None or not ws.alive or tid not in ws.in_flight:
            return
        ws.in_flight.discard(tid)
        ws.free_slots += 1
        ws.busy_time += msg.result.elapsed
        self.cache_status[ws.worker_id] = frozenset(msg.cached_partition_ids)
        if ws.leaving and not ws.in_flight:
            self._retire(ws, "left")
        else:
            self.schedule(ws)

    def _on_task_failed(self, msg: TaskFailed) -> None:
        ws = self.workers.get(msg.worker_id)
        self.trace.record("task-failed", task=msg.task_id, worker=msg.worker_id, reason=msg.reason)
        if ws is not None and msg.task_id in ws.in_flight:
            ws.in_flight.discard(msg.task_id)
            ws.free_slots += 1
        if msg.task_id in self.task_list.completed:
            return
        self.failures[msg.task_id] += 1
        if self.failures[msg.task_id] > self.config.max_task_failures:
            raise PartmatchError(f"task {msg.task_id} failed {self.failures[msg.task_id]} times: {msg.reason}")
        if self.task_list.in_flight.get(msg.task_id) == msg.worker_id:
            self.task_list.requeue(msg.task_id)
        if ws is not None and ws.alive and ws.leaving and not ws.in_flight:
            self._retire(ws, "left")
        self.schedule_all()

    # -- membership --------------------------------------------------------
    def add_worker(self, join: Join) -> None:
        if join.worker_id in self.workers:
            log.warning("rejecting duplicate worker id %s", join.worker_id)
            self.trace.record("join-rejected", worker=join.worker_id)
            if join.channel is not None:
                try:
                    join.channel.send(Shutdown())
                except OSError:
                    pass
            return
        ws = WorkerState(
            join.worker_id, join.thread_count, join.cache_capacity, join.channel,
            last_seen=self.clock(), free_slots=join.thread_count,
        )
        self.workers[join.worker_id] = ws
        self.trace.record("join", worker=join.worker_id, threads=join.thread_count, cache=join.cache_capacity)
        self.schedule(ws)

    def remove_worker(self, worker_id: str) -> None:
        """Graceful leave: no new tasks, retire once in-flight work is done."""
        ws = self.workers.get(worker_id)
        if ws is None or not ws.alive:
            return
        ws.leaving = True
        self.trace.record("leave-requested", worker=worker_id, in_flight=len(ws.in_flight))
        if not ws.in_flight:
            self._retire(ws, "left")

    def _retire(self, ws: WorkerState, why: str) -> None:
        ws.alive = False
        self.cache_status.pop(ws.worker_id, None)
        self.trace.record(why, worker=ws.worker_id)
        self._send(ws, Shutdown())

    def handle_worker_failure(self, worker_id: str) -> list[str]:
        """Return the failed worker's in-flight tasks to the open list."""
        ws = self.workers.get(worker_id)
        if ws is None or not ws.alive:
            return []
        requeued = [
            tid for tid in sorted(ws.in_flight, key=self.task_list.position.__getitem__)
            if self.task_list.in_flight.get(tid) == worker_id
        ]
        for tid in requeued:
            self.task_list.requeue(tid)
        ws.in_flight.clear()
        ws.free_slots = 0
        self._retire(ws, "failed")
        self.trace.record("requeue", worker=worker_id, tasks=requeued)
        self.schedule_all()
        return requeued

    def check_liveness(self, now: float | None = None) -> None:
        now = self.clock() if now is None else now
        for ws in list(self.workers.values()):
            if ws.alive and now - ws.last_seen > self.config.heartbeat_timeout:
                log.warning("worker %s missed its heartbeat deadline", ws.worker_id)
                self.handle_worker_failure(ws.worker_id)

    # -- main loop ---------------------------------------------------------
    def run(self, timeout: float | None = None) -> None:
        """Drain messages until every task is complete.

        Raises :class:`PartialResultsError` when no live worker remains for
        ``membership_timeout`` seconds or ``timeout`` expires.
        """
        self._started = self.clock()
        self.trace.record("start", tasks=len(self.task_list))
        try:
            while not self.done:
                try:
                    msg = self.inbox.get(timeout=self.config.tick)
                except queue.Empty:
                    msg = None
                if msg is not None:
                    self.handle(msg)
                now = self.clock()
                self.check_liveness(now)
                if self.done:
                    break
                if self.alive_workers():
                    self._no_worker_since = None
                elif self._no_worker_since is None:
                    self._no_worker_since = now
                elif now - self._no_worker_since > self.config.membership_timeout:
                    self._abort("no live worker left with open tasks")
                if timeout is not None and now - self._started > timeout:
                    self._abort(f"run exceeded {timeout}s")
        finally:
            self._finished = self.clock()
            self.trace.record("end", completed=len(self.task_list.completed))
            for ws in self.alive_workers():
                self._retire(ws, "shutdown")

    def _abort(self, why: str) -> None:
        self.trace.record("abort", reason=why)
        open_ids = [t.task_id for t in self.task_list.open] + list(self.task_list.in_flight)
        raise PartialResultsError(
            f"{why}; {len(open_ids)} of {len(self.task_list)} tasks unfinished",
            merge_results(self.store.results()),
            open_ids,
        )

    def metrics(self) -> RunMetrics:
        results = self.store.results()
        corrs = merge_results(results)
        fetches = self.store.total_fetches - self._fetches_at_start
        elapsed = 0.0
        if self._started is not None:
            elapsed = (self._finished if self._finished is not None else self.clock()) - self._started
        return RunMetrics.build(
            task_count=len(self.task_list),
            partition_count=self.partition_count,
            total_elapsed=elapsed,
            per_worker_busy_time={w.worker_id: w.busy_time for w in self.workers.values()},
            pairs_compared=sum(r.pairs_compared for r in results),
            fetches=fetches,
            cache_hits=self.cache_hits,
            correspondence_count=len(corrs),
        )
