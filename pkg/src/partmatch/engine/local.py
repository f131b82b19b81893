"""Wiring a coordinator, a data store and workers into one runnable cluster."""

from __future__ import annotations

import logging
import os
import subprocess
import sys
import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from ..dataservice import DataStore
from ..errors import DuplicateWorkerError
from ..metrics import RunMetrics
from ..model import Correspondence, merge_results
from ..partitioning import PartitionPlan
from ..strategies import MatchStrategy, strategy_to_dict
from .coordinator import Coordinator, EngineConfig
from .messages import Leave, WorkerLost
from .transport import CoordinatorServer, DataServer
from .worker import MatchWorker, ProcessCompute, WorkerDescriptor

log = logging.getLogger(__name__)

INPROCESS = "inprocess"
SOCKET = "socket"


@dataclass
class RunOutcome:
    correspondences: frozenset[Correspondence]
    metrics: RunMetrics
    trace: list[dict] = field(default_factory=list)


class LocalCluster:
    """Coordinator plus workers on this machine.

    With ``transport="inprocess"`` workers are thread pools in this process
    talking through queues; with ``transport="socket"`` each worker is a
    separate OS process connected over TCP using the framed message contract.
    """

    def __init__(
        self,
        plan: PartitionPlan,
        strategy: MatchStrategy,
        store: DataStore,
        *,
        config: EngineConfig | None = None,
        transport: str = INPROCESS,
        on_progress: Callable[[int, int], None] | None = None,
    ) -> None:
        if transport not in (INPROCESS, SOCKET):
            raise ValueError(f"unknown transport {transport!r}")
        self.plan = plan
        self.strategy = strategy
        self.store = store
        self.config = config or EngineConfig()
        self.transport = transport
        store.register_partitions(plan.partitions)
        store.register_tasks(plan.tasks)
        self.strategies = {t.strategy_id: strategy for t in plan.tasks}
        self.strategies[strategy.strategy_id] = strategy
        self.coordinator = Coordinator(
            plan.tasks, store, config=self.config, partition_count=len(plan.partitions), on_progress=on_progress
        )
        self.workers: dict[str, MatchWorker] = {}
        self.processes: dict[str, subprocess.Popen] = {}
        self._computes: list[ProcessCompute] = []
        self._ids: set[str] = set()
        self._ids_lock = threading.Lock()
        self._thread: threading.Thread | None = None
        self._error: BaseException | None = None
        self._servers: tuple[CoordinatorServer, DataServer] | None = None
        if transport == SOCKET:
            wire = {sid: strategy_to_dict(s) for sid, s in self.strategies.items()}
            self._servers = (CoordinatorServer(self.coordinator, wire), DataServer(store))

    # -- membership --------------------------------------------------------
    def add_worker(
        self,
        descriptor: WorkerDescriptor,
        *,
        compute: str = "thread",
        task_delay: Callable[[], float] | None = None,
    ) -> MatchWorker | subprocess.Popen:
        with self._ids_lock:
            if descriptor.worker_id in self._ids:
                raise DuplicateWorkerError(f"worker id {descriptor.worker_id!r} already in use")
            self._ids.add(descriptor.worker_id)
        if self.transport == SOCKET:
            return self._spawn(descriptor, compute)
        pool = None
        if compute == "process":
            pool = ProcessCompute(descriptor.thread_count)
            self._computes.append(pool)
        w = MatchWorker(
            descriptor,
            fetch=self.store.fetch_partition,
            strategies=self.strategies,
            send=self.coordinator.post,
            heartbeat_interval=self.config.heartbeat_interval,
            compute=pool,
            task_delay=task_delay,
        )
        self.workers[descriptor.worker_id] = w
        w.start()
        return w

    def _spawn(self, d: WorkerDescriptor, compute: str) -> subprocess.Popen:
        coord, data = (s.address for s in self._servers)
        cmd = [
            sys.executable, "-m", "partmatch.engine.remote",
            "--coordinator", f"{coord[0]}:{coord[1]}", "--data", f"{data[0]}:{data[1]}",
            "--worker-id", d.worker_id, "--threads", str(d.thread_count), "--cache", str(d.cache_capacity),
            "--heartbeat", str(self.config.heartbeat_interval), "--compute", compute,
        ]
        proc = subprocess.Popen(cmd, env=dict(os.environ))
        self.processes[d.worker_id] = proc
        return proc

    def remove_worker(self, worker_id: str) -> None:
        """Graceful removal: the worker finishes its in-flight tasks first."""
        self.coordinator.post(Leave(worker_id))

    def crash_worker(self, worker_id: str, deliver_late: bool = False) -> None:
        """Kill a worker without notice; the coordinator finds out by heartbeat
        timeout (or, for socket workers, by the dropped connection)."""
        if worker_id in self.processes:
            self.processes[worker_id].kill()
            return
        self.workers[worker_id].crash(deliver_late=deliver_late)

    def declare_failed(self, worker_id: str) -> None:
        self.coordinator.post(WorkerLost(worker_id, reason="declared failed"))

    # -- running -----------------------------------------------------------
    def run(self, timeout: float | None = None) -> RunOutcome:
        try:
            self.coordinator.run(timeout=timeout)
        finally:
            self._teardown()
        return self.outcome()

    def start(self, timeout: float | None = None) -> None:
        def target() -> None:
            try:
                self.coordinator.run(timeout=timeout)
            except BaseException as exc:  # surfaced by wait()
                self._error = exc
            finally:
                self._teardown()

        self._thread = threading.Thread(target=target, name="coordinator", daemon=True)
        self._thread.start()

    def wait(self) -> RunOutcome:
        assert self._thread is not None, "start() was not called"
        self._thread.join()
        if self._error is not None:
            raise self._error
        return self.outcome()

    def outcome(self) -> RunOutcome:
        return RunOutcome(
            merge_results(self.store.results()), self.coordinator.metrics(), list(self.coordinator.trace.events)
        )

    def _teardown(self) -> None:
        for w in self.workers.values():
            w.stop()
        for w in self.workers.values():
            w.join(timeout=5)
        for pool in self._computes:
            pool.close()
        for proc in self.processes.values():
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
        if self._servers:
            for s in self._servers:
                s.close()


def run_workflow(
    plan: PartitionPlan,
    strategy: MatchStrategy,
    workers: Sequence[WorkerDescriptor],
    store: DataStore,
    *,
    config: EngineConfig | None = None,
    transport: str = INPROCESS,
    compute: str = "thread",
    timeout: float | None = None,
) -> RunOutcome:
    """Execute every task of ``plan`` and merge the results."""
    cluster = LocalCluster(plan, strategy, store, config=config, transport=transport)
    for d in workers:
        cluster.add_worker(d, compute=compute)
    return cluster.run(timeout=timeout)
