from __future__ import annotations

import io
import struct
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from partmatch.dataservice import DataStore
from partmatch.engine import EngineConfig, LocalCluster, WorkerDescriptor, run_workflow
from partmatch.engine.messages import (
    AssignTask,
    Completion,
    Heartbeat,
    Join,
    Leave,
    Shutdown,
    TaskFailed,
    Welcome,
    from_wire,
    to_wire,
)
from partmatch.engine.transport import DataServer, RemoteDataClient, encode_frame, read_frame
from partmatch.errors import PartitionNotFound
from partmatch.model import Correspondence, MatchResult
from partmatch.partitioning import size_based_partition
from partmatch.strategies import default_wam
from partmatch.synthetic import generate_synthetic


def test_frame_layout_is_length_prefixed_json():
    frame = encode_frame({"type": "heartbeat", "worker_id": "w"})
    (size,) = struct.unpack(">I", frame[:4])
    assert size == len(frame) - 4
    assert frame[4:] == b'{"type":"heartbeat","worker_id":"w"}'


def test_read_frame_handles_eof_and_truncation():
    assert read_frame(io.BytesIO(b"")) is None
    with pytest.raises(ConnectionError):
        read_frame(io.BytesIO(b"\x00\x00"))
    with pytest.raises(ConnectionError):
        read_frame(io.BytesIO(b"\x00\x00\x00\x09{}"))


@given(st.lists(st.dictionaries(st.text(max_size=5), st.integers() | st.text(max_size=5)), max_size=5))
def test_frames_round_trip_back_to_back(objs):
    stream = io.BytesIO(b"".join(encode_frame(o) for o in objs))
    assert [read_frame(stream) for _ in objs] == objs
    assert read_frame(stream) is None


sims = st.floats(0, 1, allow_nan=False)


@given(sim=sims, hits=st.integers(0, 5))
def test_messages_round_trip(sim, hits):
    c = Correspondence(("A", "1"), ("B", "x é"), sim)
    msgs = [
        Join("w", 2, 4),
        Leave("w"),
        Heartbeat("w"),
        AssignTask("P|Q", ("P", "Q"), "wam"),
        Completion("w", "P|Q", MatchResult("P|Q", frozenset({c}), 12, 0.5), ("P",), hits, 1),
        TaskFailed("w", "P|Q", "oops"),
        Shutdown(),
        Welcome({"wam": {"kind": "wam"}}),
    ]
    for m in msgs:
        back = from_wire(read_frame(io.BytesIO(encode_frame(to_wire(m)))))
        assert back == m


def test_data_server_fetch_and_not_found():
    ents = generate_synthetic(20, seed=1, miss_rate=0.3)
    store = DataStore()
    store.add_entities(ents)
    plan = size_based_partition(ents, 8)
    store.register_partitions(plan.partitions)
    server = DataServer(store)
    try:
        client = RemoteDataClient(server.address)
        got = client.fetch(plan.partitions[1].partition_id)
        assert [(e.key, dict(e.attributes)) for e in got] == [
            (e.key, dict(e.attributes)) for e in store.fetch_partition(plan.partitions[1].partition_id)
        ]
        with pytest.raises(PartitionNotFound):
            client.fetch("missing")
    finally:
        server.close()


@pytest.fixture(scope="module")
def socket_case():
    ents = generate_synthetic(160, seed=21, miss_rate=0.2)
    return ents, oracles.match_pairs(default_wam(), ents, oracles.all_pairs(ents))


@pytest.mark.slow
def test_socket_workers_match_oracle(socket_case):
    ents, expected = socket_case
    store = DataStore()
    store.add_entities(ents)
    plan = size_based_partition(ents, 30)
    out = run_workflow(
        plan, default_wam(), [WorkerDescriptor("r0", 2, 3), WorkerDescriptor("r1", 1, 3)], store,
        transport="socket", timeout=120,
    )
    assert oracles.as_mapping(out.correspondences) == expected
    assert out.metrics.fetches == store.total_fetches


@pytest.mark.slow
def test_killed_socket_worker_is_recovered(socket_case):
    ents, expected = socket_case
    store = DataStore()
    store.add_entities(ents)
    plan = size_based_partition(ents, 20)
    cfg = EngineConfig(heartbeat_interval=0.1, heartbeat_timeout=2.0)
    cluster = LocalCluster(plan, default_wam(), store, config=cfg, transport="socket")
    cluster.add_worker(WorkerDescriptor("r0", 1, 2))
    cluster.add_worker(WorkerDescriptor("r1", 1, 2))
    cluster.start(timeout=120)
    deadline = time.monotonic() + 60
    while len(cluster.coordinator.task_list.completed) < 3 and time.monotonic() < deadline:
        time.sleep(0.01)
    cluster.crash_worker("r0")
    out = cluster.wait()
    assert oracles.as_mapping(out.correspondences) == expected
    assert any(e["event"] == "failed" and e["worker"] == "r0" for e in out.trace)
