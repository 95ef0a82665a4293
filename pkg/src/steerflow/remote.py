"""Remote execution over TCP: worker registration, dispatch, fault recovery.

Workers dial the server, announce a slot count, and receive task frames up
to that many at a time. A worker is declared lost on connection EOF or
after three missed heartbeats; its in-flight tasks are re-dispatched once,
and fail with category ``worker-lost`` if they are lost again.
"""

from __future__ import annotations

import json
import socket
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from . import _clock
from .errors import ConnectionLostError, DecodeError, FrameError
from .framing import DEFAULT_MAX_FRAME, read_frame_or_eof, set_nodelay, write_frame
from .records import ResultRecord
from .tcp_queue import unwrap_record, wrap_record

DEFAULT_HEARTBEAT_S = 5.0
MISSED_HEARTBEATS_ALLOWED = 3


@dataclass
class WorkerInfo:
    worker_id: str
    slots: int
    conn: socket.socket
    last_heartbeat: float
    in_flight: set = field(default_factory=set)
    alive: bool = True
    # Dispatch must not race the registration ack onto the socket, so a
    # worker only becomes eligible once the ack has been written.
    ready: bool = False
    send_lock: threading.Lock = field(default_factory=threading.Lock)


class RemoteExecutor:
    """Executor backed by out-of-process workers connected over TCP.

    Satisfies the same contract as ``LocalExecutor`` (``start``, ``submit``,
    ``drain``, ``shutdown``); the method registry lives in the workers, so
    the registry passed to ``start`` is not consulted here.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        heartbeat_interval_s: float = DEFAULT_HEARTBEAT_S,
        retry_limit: int = 1,
        max_frame: int = DEFAULT_MAX_FRAME,
    ):
        self._host = host
        self._port = port
        self.heartbeat_interval_s = heartbeat_interval_s
        self.retry_limit = retry_limit
        self.max_frame = max_frame
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._workers: "dict[str, WorkerInfo]" = {}  # registration order preserved
        self._ready: deque = deque()  # records awaiting a free slot
        self._pending: dict[str, tuple[ResultRecord, Callable]] = {}
        self._dispatched: dict[str, bytes] = {}  # task_id -> encoded frame for re-sends
        self._assignments: dict[str, str] = {}  # task_id -> worker_id
        self._redispatches: dict[str, int] = {}
        self._completed: set = set()
        self._stopping = False
        self._stop_event = threading.Event()
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self.stats = {"redispatches": 0, "workers_lost": 0, "workers_seen": 0}

    # -- lifecycle -------------------------------------------------------------

    def start(self, registry=None) -> "RemoteExecutor":
        if self._listener is not None:
            return self
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self._host, self._port))
        listener.listen(16)
        self._listener = listener
        self._port = listener.getsockname()[1]
        for target, name in (
            (self._accept_loop, "remote-accept"),
            (self._dispatch_loop, "remote-dispatch"),
            (self._monitor_loop, "remote-monitor"),
        ):
            thread = threading.Thread(target=target, name=name, daemon=True)
            thread.start()
            self._threads.append(thread)
        return self

    @property
    def endpoint(self) -> str:
        return f"{self._host}:{self._port}"

    def wait_for_workers(self, count: int, timeout_s: float = 30.0) -> bool:
        deadline = _clock.mono_now() + timeout_s
        with self._cond:
            while sum(1 for w in self._workers.values() if w.alive and w.ready) < count:
                remaining = deadline - _clock.mono_now()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
            return True

    def shutdown(self) -> None:
        with self._cond:
            self._stopping = True
            leftovers = [(tid, *self._pending[tid]) for tid in list(self._pending)]
            self._pending.clear()
            self._ready.clear()
            workers = list(self._workers.values())
            self._cond.notify_all()
        self._stop_event.set()
        for task_id, record, on_complete in leftovers:
            record.set_failure("executor shut down before completion", "cancelled")
            self._safe_complete(on_complete, record)
        if self._listener is not None:
            try:
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass  # wakes a blocked accept(); close alone does not on Linux
            try:
                self._listener.close()
            except OSError:
                pass
        for worker in workers:
            try:
                worker.conn.close()
            except OSError:
                pass
        for thread in list(self._threads):
            thread.join(timeout=5.0)

    # -- executor contract -------------------------------------------------------

    def submit(self, record: ResultRecord, on_complete: Callable[[ResultRecord], None]) -> None:
        with self._cond:
            if self._stopping:
                raise RuntimeError("executor is shut down")
            self._pending[record.task_id] = (record, on_complete)
            self._ready.append(record.task_id)
            self._cond.notify_all()

    def drain(self, timeout_s: float | None = None) -> bool:
        deadline = None if timeout_s is None else _clock.mono_now() + timeout_s
        with self._cond:
            while self._pending:
                if deadline is None:
                    self._cond.wait()
                else:
                    remaining = deadline - _clock.mono_now()
                    if remaining <= 0:
                        return False
                    self._cond.wait(remaining)
            return True

    # -- dispatch ------------------------------------------------------------------

    def _dispatch_loop(self) -> None:
        while True:
            with self._cond:
                while not self._stopping and not (self._ready and self._free_worker()):
                    self._cond.wait(0.1)
                if self._stopping:
                    return
                task_id = self._ready.popleft()
                entry = self._pending.get(task_id)
                if entry is None:
                    continue
                worker = self._free_worker()
                record = entry[0]
                data = self._dispatched.get(task_id)
                if data is None:
                    data = wrap_record("task", record, self.max_frame)
                    self._dispatched[task_id] = data
                worker.in_flight.add(task_id)
                self._assignments[task_id] = worker.worker_id
            if not self._send(worker, data):
                self._worker_lost(worker)

    def _free_worker(self) -> WorkerInfo | None:
        for worker in self._workers.values():
            if worker.alive and worker.ready and len(worker.in_flight) < worker.slots:
                return worker
        return None

    def _send(self, worker: WorkerInfo, data: bytes) -> bool:
        with worker.send_lock:
            try:
                write_frame(worker.conn, data, self.max_frame)
                return True
            except OSError:
                return False

    def _safe_complete(self, on_complete: Callable, record: ResultRecord) -> None:
        try:
            on_complete(record)
        except Exception:  # noqa: BLE001 - completion must not kill server loops
            pass

    # -- worker connections ------------------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while True:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            set_nodelay(conn)
            thread = threading.Thread(
                target=self._worker_session, args=(conn,), name="remote-worker-io", daemon=True
            )
            thread.start()
            self._threads.append(thread)

    def _worker_session(self, conn: socket.socket) -> None:
        worker = None
        try:
            raw = read_frame_or_eof(conn, self.max_frame)
            if raw is None:
                conn.close()
                return
            hello = json.loads(raw.decode("utf-8"))
            if hello.get("kind") != "register":
                self._reject(conn, "expected a register message")
                return
            worker_id = str(hello.get("worker_id", ""))
            slots = int(hello.get("slots", 0))
            if not worker_id or slots < 1:
                self._reject(conn, "register needs worker_id and slots >= 1")
                return
            with self._cond:
                existing = self._workers.get(worker_id)
                if existing is not None and existing.alive:
                    pass  # rejected below, outside the lock
                else:
                    worker = WorkerInfo(
                        worker_id=worker_id,
                        slots=slots,
                        conn=conn,
                        last_heartbeat=_clock.mono_now(),
                    )
                    self._workers[worker_id] = worker
                    self.stats["workers_seen"] += 1
            if worker is None:
                self._reject(conn, f"worker id {worker_id!r} already registered")
                return
            write_frame(
                conn, json.dumps({"kind": "register_ack"}).encode("utf-8"), self.max_frame
            )
            with self._cond:
                worker.ready = True
                self._cond.notify_all()
            self._worker_read_loop(worker)
        except (OSError, ValueError, FrameError, ConnectionLostError, DecodeError):
            pass
        finally:
            if worker is not None:
                self._worker_lost(worker)
            try:
                conn.close()
            except OSError:
                pass

    def _reject(self, conn: socket.socket, message: str) -> None:
        try:
            write_frame(
                conn,
                json.dumps({"kind": "error", "message": message}).encode("utf-8"),
                self.max_frame,
            )
        except OSError:
            pass
        finally:
            conn.close()

    def _worker_read_loop(self, worker: WorkerInfo) -> None:
        while True:
            raw = read_frame_or_eof(worker.conn, self.max_frame)
            if raw is None:
                return
            message = json.loads(raw.decode("utf-8"))
            kind = message.get("kind")
            if kind == "ping":
                with self._cond:
                    worker.last_heartbeat = _clock.mono_now()
            elif kind == "result":
                record = unwrap_record(raw)
                self._complete_from_worker(worker, record)

    def _complete_from_worker(self, worker: WorkerInfo, record: ResultRecord) -> None:
        with self._cond:
            worker.in_flight.discard(record.task_id)
            entry = self._pending.pop(record.task_id, None)
            if record.task_id in self._completed or entry is None:
                # Duplicate from a worker declared lost mid-flight; the
                # first completion already won.
                self._cond.notify_all()
                return
            self._completed.add(record.task_id)
            self._dispatched.pop(record.task_id, None)
            self._assignments.pop(record.task_id, None)
            self._cond.notify_all()
        self._safe_complete(entry[1], record)

    def _worker_lost(self, worker: WorkerInfo) -> None:
        to_fail = []
        with self._cond:
            if not worker.alive:
                return
            worker.alive = False
            self.stats["workers_lost"] += 1
            orphans = list(worker.in_flight)
            worker.in_flight.clear()
            for task_id in orphans:
                if task_id not in self._pending:
                    continue
                count = self._redispatches.get(task_id, 0) + 1
                self._redispatches[task_id] = count
                self._assignments.pop(task_id, None)
                if count > self.retry_limit:
                    record, on_complete = self._pending.pop(task_id)
                    self._completed.add(task_id)
                    self._dispatched.pop(task_id, None)
                    to_fail.append((record, on_complete, worker.worker_id))
                else:
                    self.stats["redispatches"] += 1
                    self._ready.appendleft(task_id)
            self._cond.notify_all()
        for record, on_complete, worker_id in to_fail:
            record.set_failure(
                f"worker {worker_id!r} lost with the task in flight "
                f"(after {self.retry_limit + 1} attempts)",
                "worker-lost",
            )
            self._safe_complete(on_complete, record)
        try:
            worker.conn.close()
        except OSError:
            pass

    # -- liveness -------------------------------------------------------------------

    def _monitor_loop(self) -> None:
        while not self._stop_event.is_set():
            with self._cond:
                if self._stopping:
                    return
                cutoff = _clock.mono_now() - MISSED_HEARTBEATS_ALLOWED * self.heartbeat_interval_s
                stale = [w for w in self._workers.values() if w.alive and w.last_heartbeat < cutoff]
            for worker in stale:
                self._worker_lost(worker)
            self._stop_event.wait(self.heartbeat_interval_s / 2)
