"""Socket transport for multi-process runs.

Every message is a frame: a 4-byte big-endian unsigned payload length
followed by that many bytes of UTF-8 JSON. The coordinator endpoint carries
the message contract in :mod:`.messages`; the data endpoint answers
``{"op": "fetch", "partition_id": ...}`` requests with
``{"ok": true, "entities": [[source, id, {attr: value}], ...]}`` or
``{"ok": false, "error": "not-found", "partition_id": ...}``.
"""

from __future__ import annotations

import json
import logging
import socket
import struct
import threading
from typing import Any, BinaryIO

from ..dataservice import DataStore
from ..errors import PartitionNotFound
from ..model import Entity
from .messages import Join, Welcome, WorkerLost, entity_from_wire, entity_to_wire, from_wire, to_wire

log = logging.getLogger(__name__)

_HEADER = struct.Struct(">I")
MAX_FRAME = 1 << 30


def encode_frame(obj: Any) -> bytes:
    body = json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return _HEADER.pack(len(body)) + body


def read_frame(stream: BinaryIO) -> Any | None:
    """Next decoded frame, or ``None`` on a clean end of stream."""
    head = stream.read(_HEADER.size)
    if not head:
        return None
    if len(head) < _HEADER.size:
        raise ConnectionError("truncated frame header")
    (size,) = _HEADER.unpack(head)
    if size > MAX_FRAME:
        raise ConnectionError(f"frame of {size} bytes exceeds limit")
    body = stream.read(size)
    if len(body) < size:
        raise ConnectionError("truncated frame body")
    return json.loads(body.decode("utf-8"))


class SocketChannel:
    def __init__(self, conn: socket.socket) -> None:
        self.conn = conn
        self._lock = threading.Lock()

    def send(self, msg: Any) -> None:
        data = encode_frame(to_wire(msg))
        with self._lock:
            self.conn.sendall(data)

    def close(self) -> None:
        try:
            self.conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.conn.close()


class _Server:
    def __init__(self, host: str, port: int) -> None:
        self.sock = socket.create_server((host, port))
        self.address = self.sock.getsockname()[:2]
        self._closed = False
        self._conns: list[socket.socket] = []
        threading.Thread(target=self._accept_loop, daemon=True, name=type(self).__name__).start()

    def _accept_loop(self) -> None:
        while not self._closed:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._conns.append(conn)
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn: socket.socket) -> None:
        raise NotImplementedError

    def close(self) -> None:
        self._closed = True
        self.sock.close()
        for c in self._conns:
            try:
                c.close()
            except OSError:
                pass


class DataServer(_Server):
    def __init__(self, store: DataStore, host: str = "127.0.0.1", port: int = 0) -> None:
        self.store = store
        super().__init__(host, port)

    def _serve(self, conn: socket.socket) -> None:
        rfile = conn.makefile("rb")
        try:
            while True:
                req = read_frame(rfile)
                if req is None:
                    return
                pid = req.get("partition_id")
                try:
                    payload = self.store.fetch_partition(pid)
                    reply = {"ok": True, "entities": [entity_to_wire(e) for e in payload]}
                except PartitionNotFound:
                    reply = {"ok": False, "error": "not-found", "partition_id": pid}
                conn.sendall(encode_frame(reply))
        except (OSError, ConnectionError, ValueError) as exc:
            log.debug("data connection closed: %s", exc)


class CoordinatorServer(_Server):
    """Accepts worker connections and feeds their messages to a coordinator."""

    def __init__(self, coordinator, strategies: dict, host: str = "127.0.0.1", port: int = 0) -> None:
        self.coordinator = coordinator
        self.strategies = strategies
        super().__init__(host, port)

    def _serve(self, conn: socket.socket) -> None:
        rfile = conn.makefile("rb")
        channel = SocketChannel(conn)
        worker_id = None
        try:
            first = read_frame(rfile)
            if first is None:
                return
            join = from_wire(first)
            if not isinstance(join, Join):
                raise ConnectionError(f"expected join, got {first.get('type')!r}")
            worker_id = join.worker_id
            channel.send(Welcome(self.strategies))
            self.coordinator.post(Join(join.worker_id, join.thread_count, join.cache_capacity, channel))
            while True:
                frame = read_frame(rfile)
                if frame is None:
                    break
                self.coordinator.post(from_wire(frame))
        except (OSError, ConnectionError, ValueError) as exc:
            log.debug("worker connection %s ended: %s", worker_id, exc)
        if worker_id is not None:
            self.coordinator.post(WorkerLost(worker_id, channel=channel))


class RemoteDataClient:
    """Fetches partitions from a :class:`DataServer`; one connection per thread."""

    def __init__(self, address: tuple[str, int]) -> None:
        self.address = address
        self._local = threading.local()

    def _conn(self):
        c = getattr(self._local, "conn", None)
        if c is None:
            sock = socket.create_connection(self.address)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            c = self._local.conn = (sock, sock.makefile("rb"))
        return c

    def fetch(self, partition_id: str) -> tuple[Entity, ...]:
        sock, rfile = self._conn()
        sock.sendall(encode_frame({"op": "fetch", "partition_id": partition_id}))
        reply = read_frame(rfile)
        if reply is None:
            raise ConnectionError("data service closed the connection")
        if not reply.get("ok"):
            raise PartitionNotFound(partition_id)
        return tuple(entity_from_wire(v) for v in reply["entities"])
