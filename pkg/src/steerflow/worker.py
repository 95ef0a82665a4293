"""Remote worker: connects to a task server, executes tasks, sends pings.

Launch with ``worker --connect HOST:PORT --slots N --id NAME``. The method
registry defaults to the benchmark task set and can be pointed at any
module attribute holding registrations via ``--methods module:attr``.
"""

from __future__ import annotations

import argparse
import importlib
import json
import socket
import sys
import threading

from .errors import ConnectionLostError, DecodeError, FrameError
from .framing import DEFAULT_MAX_FRAME, read_frame_or_eof, set_nodelay, write_frame
from .store import Resolver
from .taskserver import MethodRegistration, StateCache, execute_task
from .tcp_queue import unwrap_record, wrap_record

DEFAULT_METHODS_SPEC = "steerflow.bench.tasks:BENCH_METHODS"


def load_registry(spec: str) -> dict:
    """Load ``module:attr`` into a name -> MethodRegistration mapping."""
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ValueError(f"methods spec must look like module:attr, got {spec!r}")
    obj = getattr(importlib.import_module(module_name), attr)
    if callable(obj) and not isinstance(obj, (dict, list, tuple)):
        obj = obj()
    if isinstance(obj, dict):
        return dict(obj)
    registry = {}
    for item in obj:
        if not isinstance(item, MethodRegistration):
            item = MethodRegistration(name=item.__name__, fn=item)
        registry[item.name] = item
    return registry


class Worker:
    """One worker process's connection to the task server."""

    def __init__(
        self,
        endpoint: str,
        worker_id: str,
        slots: int = 1,
        registry: dict | None = None,
        heartbeat_interval_s: float = 5.0,
        max_frame: int = DEFAULT_MAX_FRAME,
    ):
        if slots < 1:
            raise ValueError("slots must be >= 1")
        self.endpoint = endpoint
        self.worker_id = worker_id
        self.slots = slots
        self.registry = registry if registry is not None else load_registry(DEFAULT_METHODS_SPEC)
        self.heartbeat_interval_s = heartbeat_interval_s
        self.max_frame = max_frame
        self.cache = StateCache()
        self.resolver = Resolver()
        self._conn: socket.socket | None = None
        self._send_lock = threading.Lock()
        self._stopped = threading.Event()

    def run(self) -> int:
        """Serve until the server hangs up. Returns a process exit code."""
        host, _, port = self.endpoint.rpartition(":")
        try:
            conn = socket.create_connection((host, int(port)), timeout=10.0)
        except OSError as exc:
            print(f"worker: cannot reach {self.endpoint}: {exc}", file=sys.stderr)
            return 2
        set_nodelay(conn)
        conn.settimeout(None)
        self._conn = conn
        try:
            self._send_json({"kind": "register", "worker_id": self.worker_id, "slots": self.slots})
            raw = read_frame_or_eof(conn, self.max_frame)
            if raw is None:
                print("worker: server hung up during registration", file=sys.stderr)
                return 2
            ack = json.loads(raw.decode("utf-8"))
            if ack.get("kind") != "register_ack":
                print(f"worker: registration refused: {ack.get('message')}", file=sys.stderr)
                return 2
            pinger = threading.Thread(target=self._ping_loop, name="worker-ping", daemon=True)
            pinger.start()
            self._task_loop(conn)
            return 0
        except (OSError, ValueError, FrameError, ConnectionLostError, DecodeError) as exc:
            print(f"worker: connection error: {exc}", file=sys.stderr)
            return 1
        finally:
            self._stopped.set()
            try:
                conn.close()
            except OSError:
                pass

    def _task_loop(self, conn: socket.socket) -> None:
        while True:
            raw = read_frame_or_eof(conn, self.max_frame)
            if raw is None:
                return
            message = json.loads(raw.decode("utf-8"))
            kind = message.get("kind")
            if kind == "shutdown":
                return
            if kind != "task":
                continue
            record = unwrap_record(raw)
            thread = threading.Thread(
                target=self._run_task, args=(record,), name="worker-task", daemon=True
            )
            thread.start()

    def _run_task(self, record) -> None:
        execute_task(self.registry, record, cache=self.cache, resolver=self.resolver)
        data = wrap_record("result", record, self.max_frame)
        with self._send_lock:
            conn = self._conn
            if conn is None:
                return
            try:
                write_frame(conn, data, self.max_frame)
            except OSError:
                pass

    def _send_json(self, message: dict) -> None:
        conn = self._conn
        assert conn is not None
        with self._send_lock:
            write_frame(conn, json.dumps(message).encode("utf-8"), self.max_frame)

    def _ping_loop(self) -> None:
        while not self._stopped.wait(self.heartbeat_interval_s):
            try:
                self._send_json({"kind": "ping"})
            except OSError:
                return


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="worker", description="Run a remote task worker against a task server."
    )
    parser.add_argument("--connect", required=True, metavar="HOST:PORT")
    parser.add_argument("--slots", type=int, default=1)
    parser.add_argument("--id", dest="worker_id", required=True)
    parser.add_argument(
        "--methods",
        default=DEFAULT_METHODS_SPEC,
        help="module:attr holding the method registrations "
        f"(default: {DEFAULT_METHODS_SPEC})",
    )
    parser.add_argument("--heartbeat", type=float, default=5.0, metavar="SECONDS")
    args = parser.parse_args(argv)
    worker = Worker(
        endpoint=args.connect,
        worker_id=args.worker_id,
        slots=args.slots,
        registry=load_registry(args.methods),
        heartbeat_interval_s=args.heartbeat,
    )
    return worker.run()


if __name__ == "__main__":
    sys.exit(main())
