"""Entry point for a match worker running in its own process.

    python -m partmatch.engine.remote --coordinator HOST:PORT --data HOST:PORT \
        --worker-id w1 --threads 4 --cache 16
"""

from __future__ import annotations

import argparse
import logging
import socket
import sys

from ..strategies import strategy_from_dict
from .messages import AssignTask, Join, Shutdown, Welcome, from_wire, to_wire
from .transport import RemoteDataClient, SocketChannel, encode_frame, read_frame
from .worker import MatchWorker, ProcessCompute, WorkerDescriptor


def _addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def serve(
    coordinator: tuple[str, int],
    data: tuple[str, int],
    descriptor: WorkerDescriptor,
    heartbeat_interval: float = 1.0,
    compute: str = "thread",
) -> int:
    conn = socket.create_connection(coordinator)
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    rfile = conn.makefile("rb")
    conn.sendall(encode_frame(to_wire(Join(descriptor.worker_id, descriptor.thread_count, descriptor.cache_capacity))))
    first = read_frame(rfile)
    welcome = from_wire(first) if first is not None else None
    if not isinstance(welcome, Welcome):
        logging.error("coordinator refused %s: %r", descriptor.worker_id, first)
        return 1
    strategies = {sid: strategy_from_dict(d) for sid, d in welcome.strategies.items()}
    channel = SocketChannel(conn)
    pool = ProcessCompute(descriptor.thread_count) if compute == "process" else None
    worker = MatchWorker(
        descriptor,
        fetch=RemoteDataClient(data).fetch,
        strategies=strategies,
        send=channel.send,
        heartbeat_interval=heartbeat_interval,
        compute=pool,
    )
    worker.start(announce=False)
    try:
        while True:
            frame = read_frame(rfile)
            msg = Shutdown() if frame is None else from_wire(frame)
            worker.inbox.put(msg)
            if isinstance(msg, Shutdown):
                break
            if not isinstance(msg, AssignTask):
                logging.warning("unexpected message %r", msg)
    except (OSError, ConnectionError):
        worker.inbox.put(Shutdown())
    worker.stop()
    worker.join(timeout=5)
    if pool is not None:
        pool.close()
    channel.close()
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="partmatch-worker")
    ap.add_argument("--coordinator", required=True, type=_addr)
    ap.add_argument("--data", required=True, type=_addr)
    ap.add_argument("--worker-id", required=True)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--cache", type=int, default=0)
    ap.add_argument("--heartbeat", type=float, default=1.0)
    ap.add_argument("--compute", choices=("thread", "process"), default="thread")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    desc = WorkerDescriptor(args.worker_id, args.threads, args.cache)
    return serve(args.coordinator, args.data, desc, args.heartbeat, args.compute)


if __name__ == "__main__":
    sys.exit(main())
