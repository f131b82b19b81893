"""Match worker: a pool of task-executing threads sharing one partition cache."""

from __future__ import annotations

import logging
import queue
import threading
import time
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Any

from ..model import Entity, MatchResult
from ..strategies import MatchStrategy, evaluate_partition_pair
from .cache import PartitionCache
from .messages import AssignTask, Completion, Heartbeat, Join, Leave, Shutdown, TaskFailed

log = logging.getLogger(__name__)

Fetch = Callable[[str], Sequence[Entity]]
Compute = Callable[[MatchStrategy, Sequence[Entity], Sequence[Entity], bool, str], MatchResult]


@dataclass(frozen=True)
class WorkerDescriptor:
    worker_id: str
    thread_count: int = 1
    cache_capacity: int = 0

    def __post_init__(self) -> None:
        if self.thread_count < 1:
            raise ValueError("thread_count must be >= 1")
        if self.cache_capacity < 0:
            raise ValueError("cache_capacity must be >= 0")


def execute_task(
    worker_id: str,
    task: AssignTask,
    strategy: MatchStrategy,
    cache: PartitionCache,
    fetch: Fetch,
    compute: Compute = evaluate_partition_pair,
) -> Completion:
    """Load the task's partitions through the cache, match, and report."""
    hits = fetches = 0
    payloads = []
    for pid in task.partition_ids:
        acc = cache.access(pid, fetch)
        if acc.hit:
            hits += 1
        else:
            fetches += 1
        payloads.append(acc.payload)
    self_task = len(task.partition_ids) == 1
    result = compute(strategy, payloads[0], payloads[-1], self_task, task.task_id)
    return Completion(worker_id, task.task_id, result, cache.resident(), hits, fetches)


class QueueChannel:
    """Coordinator-side handle for an in-process worker."""

    def __init__(self, inbox: queue.Queue) -> None:
        self._inbox = inbox

    def send(self, msg: Any) -> None:
        self._inbox.put(msg)


def _warm(_: int) -> None:
    time.sleep(0.05)  # keeps one child busy so the next ping starts another


class ProcessCompute:
    """Runs partition matching in child processes so threads are not GIL-bound."""

    def __init__(self, processes: int, warm: bool = True) -> None:
        self._pool = ProcessPoolExecutor(processes, mp_context=get_context("spawn"))
        if warm:
            # spawn start-up stays out of the timed matching phase
            list(self._pool.map(_warm, range(processes)))

    def __call__(self, strategy, a, b, self_task, task_id) -> MatchResult:
        return self._pool.submit(evaluate_partition_pair, strategy, a, b, self_task, task_id).result()

    def close(self) -> None:
        self._pool.shutdown(wait=True, cancel_futures=True)


class MatchWorker:
    """In-process or remote match service.

    ``send`` delivers messages to the coordinator; assignments arrive in
    :attr:`inbox`. Each of the ``thread_count`` threads runs one task at a
    time.
    """

    def __init__(
        self,
        descriptor: WorkerDescriptor,
        *,
        fetch: Fetch,
        strategies: Mapping[str, MatchStrategy],
        send: Callable[[Any], None],
        heartbeat_interval: float = 1.0,
        compute: Compute | None = None,
        task_delay: Callable[[], float] | None = None,
    ) -> None:
        self.descriptor = descriptor
        self.worker_id = descriptor.worker_id
        self.cache = PartitionCache(descriptor.cache_capacity)
        self.inbox: queue.Queue = queue.Queue()
        self.strategies = dict(strategies)
        self._fetch = fetch
        self._send_raw = send
        self._compute = compute or evaluate_partition_pair
        self._task_delay = task_delay
        self._heartbeat_interval = heartbeat_interval
        self._stop = threading.Event()
        self._crashed = False
        self._deliver_late = False
        self._late: list[Any] = []
        self._late_lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self.completed = 0

    # -- lifecycle ---------------------------------------------------------
    def start(self, announce: bool = True) -> None:
        for i in range(self.descriptor.thread_count):
            t = threading.Thread(target=self._slot, name=f"{self.worker_id}-t{i}", daemon=True)
            t.start()
            self._threads.append(t)
        hb = threading.Thread(target=self._heartbeat, name=f"{self.worker_id}-hb", daemon=True)
        hb.start()
        self._threads.append(hb)
        if announce:
            self._send(
                Join(self.worker_id, self.descriptor.thread_count, self.descriptor.cache_capacity,
                     QueueChannel(self.inbox))
            )

    def leave(self) -> None:
        self._send(Leave(self.worker_id))

    def crash(self, deliver_late: bool = False) -> None:
        """Simulate a crash: go silent. With ``deliver_late`` completions are
        buffered and can be pushed later with :meth:`release_late`."""
        self._crashed = True
        self._deliver_late = deliver_late

    def release_late(self) -> int:
        with self._late_lock:
            late, self._late = self._late, []
        for msg in late:
            self._send_raw(msg)
        return len(late)

    def stop(self) -> None:
        self._stop.set()
        self.inbox.put(Shutdown())

    def join(self, timeout: float | None = None) -> None:
        for t in self._threads:
            t.join(timeout)

    @property
    def stopped(self) -> bool:
        return self._stop.is_set()

    # -- internals ---------------------------------------------------------
    def _send(self, msg: Any) -> None:
        if self._crashed:
            if self._deliver_late and isinstance(msg, Completion):
                with self._late_lock:
                    self._late.append(msg)
            return
        self._send_raw(msg)

    def _heartbeat(self) -> None:
        while not self._stop.wait(self._heartbeat_interval):
            if self._crashed:
                return
            self._send(Heartbeat(self.worker_id))

    def _slot(self) -> None:
        while True:
            msg = self.inbox.get()
            if isinstance(msg, Shutdown):
                self._stop.set()
                self.inbox.put(msg)  # let sibling threads see it too
                return
            if not isinstance(msg, AssignTask):
                log.warning("%s ignoring %r", self.worker_id, msg)
                continue
            try:
                if self._task_delay is not None:
                    self._stop.wait(self._task_delay())
                done = execute_task(
                    self.worker_id, msg, self.strategies[msg.strategy_id], self.cache, self._fetch, self._compute
                )
            except Exception as exc:  # reported to the coordinator, which requeues
                log.exception("task %s failed on %s", msg.task_id, self.worker_id)
                self._send(TaskFailed(self.worker_id, msg.task_id, f"{type(exc).__name__}: {exc}"))
                continue
            self.completed += 1
            self._send(done)
