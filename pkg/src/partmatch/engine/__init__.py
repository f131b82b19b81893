"""Coordinator/worker execution of match tasks."""

from .cache import Access, PartitionCache
from .coordinator import Coordinator, EngineConfig, TaskList, TraceLog, select_task
from .local import INPROCESS, SOCKET, LocalCluster, RunOutcome, run_workflow
from .worker import MatchWorker, WorkerDescriptor, execute_task

__all__ = [
    "Access",
    "Coordinator",
    "EngineConfig",
    "INPROCESS",
    "LocalCluster",
    "MatchWorker",
    "PartitionCache",
    "RunOutcome",
    "SOCKET",
    "TaskList",
    "TraceLog",
    "WorkerDescriptor",
    "execute_task",
    "run_workflow",
    "select_task",
]
