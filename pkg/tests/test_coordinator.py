"""Coordinator logic driven message by message, without threads."""

from __future__ import annotations

import pytest

from partmatch.dataservice import DataStore
from partmatch.engine.coordinator import Coordinator, EngineConfig, TaskList, select_task
from partmatch.engine.messages import AssignTask, Completion, Heartbeat, Join, Leave, Shutdown, TaskFailed, WorkerLost
from partmatch.errors import IntegrityError, PartialResultsError
from partmatch.model import Correspondence, MatchResult, MatchTask
from partmatch.partitioning import triangular_tasks


class Recorder:
    def __init__(self):
        self.sent = []

    def send(self, msg):
        self.sent.append(msg)

    @property
    def assigned(self):
        return [m.task_id for m in self.sent if isinstance(m, AssignTask)]


class Clock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now


def _coordinator(tasks, **cfg):
    store = DataStore()
    store.register_tasks(tasks)
    clock = Clock()
    coord = Coordinator(tasks, store, config=EngineConfig(**cfg), clock=clock)
    return coord, store, clock


def _join(coord, wid, threads=1, cache=4):
    ch = Recorder()
    coord.handle(Join(wid, threads, cache, ch))
    return ch


def _done(coord, wid, tid, cached=(), hits=0, fetches=1, corrs=frozenset()):
    coord.handle(Completion(wid, tid, MatchResult(tid, corrs, 1), tuple(cached), hits, fetches))


# -- selection ----------------------------------------------------------------
def test_fifo_without_cache_status():
    tl = TaskList(triangular_tasks(["P0", "P1", "P2"]))
    picked = [select_task("w", tl, {}).task_id for _ in range(3)]
    assert picked == ["P0|P0", "P0|P1", "P0|P2"]


def test_prefers_task_with_both_partitions_cached():
    tl = TaskList(triangular_tasks(["P0", "P1", "P2", "P3"]))
    t = select_task("w", tl, {"w": {"P2", "P3"}})
    assert t.task_id == "P2|P3"


def test_self_task_on_cached_partition_counts_as_full_affinity():
    tl = TaskList(triangular_tasks(["P0", "P1", "P2"]))
    tl.assign("P0|P0", "x")
    # P1|P1 needs only P1 (affinity 1); P0|P1 also has affinity 1 and comes first
    assert select_task("w", tl, {"w": {"P1"}}).task_id == "P0|P1"


def test_affinity_disabled_is_fifo():
    tl = TaskList(triangular_tasks(["P0", "P1", "P2"]))
    assert select_task("w", tl, {"w": {"P2"}}, affinity=False).task_id == "P0|P0"


def test_requeue_restores_creation_order():
    tl = TaskList(triangular_tasks(["P0", "P1"]))
    first = select_task("w", tl, {})
    select_task("w", tl, {})
    tl.requeue(first.task_id)
    assert tl.first_open().task_id == first.task_id


def test_duplicate_task_ids_rejected():
    t = MatchTask.between("A", "B")
    with pytest.raises(IntegrityError):
        TaskList([t, t])


# -- lifecycle ------------------------------------------------------------------
def test_join_fills_slots_and_completion_refills():
    tasks = triangular_tasks(["P0", "P1", "P2"])
    coord, _, _ = _coordinator(tasks)
    ch = _join(coord, "w", threads=2)
    assert ch.assigned == ["P0|P0", "P0|P1"]
    _done(coord, "w", "P0|P0", cached=("P0",))
    assert ch.assigned[-1] == "P0|P2"


def test_completion_uses_reported_cache_for_next_choice():
    tasks = triangular_tasks(["P0", "P1", "P2", "P3"])
    coord, _, _ = _coordinator(tasks)
    ch = _join(coord, "w")
    _done(coord, "w", ch.assigned[-1], cached=("P2", "P3"))
    assert ch.assigned[-1] == "P2|P3"


def test_heartbeat_timeout_requeues_in_flight_tasks():
    tasks = triangular_tasks(["P0", "P1"])
    coord, _, clock = _coordinator(tasks, heartbeat_timeout=5)
    a = _join(coord, "a", threads=2)
    clock.now = 3
    b = _join(coord, "b")
    assert a.assigned == ["P0|P0", "P0|P1"] and b.assigned == ["P1|P1"]
    clock.now = 6
    coord.handle(Heartbeat("b"))
    coord.check_liveness()
    assert not coord.workers["a"].alive
    _done(coord, "b", "P1|P1")
    assert b.assigned[1:] == ["P0|P0"]
    requeue = coord.trace.of("requeue")[0]
    assert requeue["tasks"] == ["P0|P0", "P0|P1"]


def test_late_duplicate_completion_is_accepted_once():
    tasks = [MatchTask.between("P0", "P0")]
    coord, store, clock = _coordinator(tasks, heartbeat_timeout=1)
    _join(coord, "a")
    clock.now = 2
    coord.check_liveness()
    _join(coord, "b")
    c = Correspondence(("s", "1"), ("s", "2"), 0.9)
    _done(coord, "b", "P0|P0", corrs=frozenset({c}))
    _done(coord, "a", "P0|P0", corrs=frozenset({c}))  # the presumed-dead worker reports late
    assert coord.done and len(store.results()) == 1
    assert [e["event"] for e in coord.trace.events if e["event"] in ("complete", "duplicate")] == [
        "complete", "duplicate"
    ]
    with pytest.raises(IntegrityError):
        _done(coord, "a", "P0|P0", corrs=frozenset())


def test_graceful_leave_finishes_in_flight_work():
    tasks = triangular_tasks(["P0", "P1"])
    coord, _, _ = _coordinator(tasks)
    a = _join(coord, "a")
    coord.handle(Leave("a"))
    assert coord.workers["a"].alive
    _done(coord, "a", a.assigned[0])
    assert not coord.workers["a"].alive
    assert len(a.assigned) == 1 and isinstance(a.sent[-1], Shutdown)
    b = _join(coord, "b")
    assert b.assigned == ["P0|P1"]


def test_worker_lost_from_stale_channel_is_ignored():
    coord, _, _ = _coordinator(triangular_tasks(["P0"]))
    ch = _join(coord, "a")
    coord.handle(WorkerLost("a", channel=object()))
    assert coord.workers["a"].alive
    coord.handle(WorkerLost("a", channel=ch))
    assert not coord.workers["a"].alive


def test_duplicate_worker_id_rejected():
    coord, _, _ = _coordinator(triangular_tasks(["P0", "P1"]))
    _join(coord, "a")
    second = _join(coord, "a")
    assert isinstance(second.sent[0], Shutdown)
    assert coord.trace.of("join-rejected")


def test_task_failure_requeues_then_gives_up():
    coord, _, _ = _coordinator([MatchTask.between("P0", "P0")], max_task_failures=1)
    a = _join(coord, "a")
    coord.handle(TaskFailed("a", "P0|P0", "boom"))
    assert a.assigned == ["P0|P0", "P0|P0"]
    with pytest.raises(Exception, match="failed 2 times"):
        coord.handle(TaskFailed("a", "P0|P0", "boom"))


def test_membership_timeout_returns_partial_results():
    tasks = triangular_tasks(["P0", "P1"])
    coord, _, _ = _coordinator(tasks, membership_timeout=0.2, heartbeat_timeout=0.1, tick=0.01)
    coord.clock = __import__("time").monotonic
    with pytest.raises(PartialResultsError) as err:
        coord.run(timeout=5)
    assert len(err.value.open_tasks) == 3
