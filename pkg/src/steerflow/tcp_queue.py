"""TCP implementation of the topic-partitioned task queues.

Topology: the steering (agent) side hosts a listening endpoint and the
task server connects to it. One connection multiplexes every topic; the
topic rides inside the record envelope. Each frame is a JSON wrapper
``{"v": 1, "kind": "hello"|"task"|"result", ...}`` with task/result
wrappers carrying the canonical record envelope under ``"record"``.
"""

from __future__ import annotations

import json
import socket
import threading
from collections import deque
from typing import Mapping

from . import _clock
from .errors import ConnectionLostError, FrameError, QueueClosedError, UnknownTopicError
from .framing import DEFAULT_MAX_FRAME, read_frame_or_eof, set_nodelay, write_frame
from .queues import DEFAULT_TOPIC
from .records import (
    ResourceSpec,
    ResultRecord,
    envelope_to_record,
    new_task_request,
    record_to_envelope,
)

PROTOCOL_VERSION = 1


def wrap_record(kind: str, record: ResultRecord, max_frame: int) -> bytes:
    start = _clock.mono_now()
    env = record_to_envelope(record)
    costs = env["time_costs"]
    costs["serialization_s"] = costs.get("serialization_s", 0.0) + (_clock.mono_now() - start)
    data = json.dumps(
        {"v": PROTOCOL_VERSION, "kind": kind, "record": env},
        separators=(",", ":"),
        sort_keys=True,
    ).encode("utf-8")
    if len(data) > max_frame:
        raise FrameError(f"encoded record of {len(data)} bytes exceeds frame cap of {max_frame}")
    return data


def unwrap_record(data: bytes) -> ResultRecord:
    start = _clock.mono_now()
    wrapper = json.loads(data.decode("utf-8"))
    record = envelope_to_record(wrapper["record"])
    record.add_time_cost("deserialization_s", _clock.mono_now() - start)
    return record


def _peek_wrapper(data: bytes) -> tuple[str, str]:
    """Return (kind, topic) for routing, without building a record."""
    head = json.loads(data.decode("utf-8"))
    record = head.get("record") or {}
    return head.get("kind", ""), record.get("topic", DEFAULT_TOPIC)


class TcpThinkerQueues:
    """Agent-side queue endpoint: hosts the listener the task server dials.

    Exposes the agent half of the queue interface (``send_inputs`` and
    ``get_result``). Tasks sent before the server connects are buffered and
    flushed on connection.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        topics=(DEFAULT_TOPIC,),
        proxy_policy=None,
        max_frame: int = DEFAULT_MAX_FRAME,
    ):
        self.topics = frozenset(topics) | {DEFAULT_TOPIC}
        self.proxy_policy = proxy_policy
        self.max_frame = max_frame
        self._host = host
        self._port = port
        self._lock = threading.Lock()
        self._result_ready = threading.Condition(self._lock)
        self._results: dict[str, deque[bytes]] = {t: deque() for t in self.topics}
        self._outbound: deque[bytes] = deque()
        self._out_ready = threading.Condition(self._lock)
        self._conn: socket.socket | None = None
        self._closed = False
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "TcpThinkerQueues":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self._host, self._port))
        listener.listen(4)
        self._listener = listener
        self._port = listener.getsockname()[1]
        accept = threading.Thread(target=self._accept_loop, name="queue-accept", daemon=True)
        accept.start()
        self._threads.append(accept)
        return self

    @property
    def endpoint(self) -> str:
        return f"{self._host}:{self._port}"

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            self._result_ready.notify_all()
            self._out_ready.notify_all()
            conn = self._conn
        if self._listener is not None:
            try:
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass  # wakes a blocked accept(); close alone does not on Linux
            try:
                self._listener.close()
            except OSError:
                pass
        if conn is not None:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        for thread in list(self._threads):
            if thread is not threading.current_thread():
                thread.join(timeout=5.0)

    @property
    def closed(self) -> bool:
        return self._closed

    def __enter__(self) -> "TcpThinkerQueues":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- agent half ----------------------------------------------------------

    def send_inputs(
        self,
        method: str,
        args: list | tuple = (),
        kwargs: Mapping | None = None,
        topic: str = DEFAULT_TOPIC,
        task_info: Mapping | None = None,
        resources: ResourceSpec | None = None,
    ) -> str:
        if topic not in self.topics:
            raise UnknownTopicError(topic)
        record = new_task_request(
            method, args=args, kwargs=kwargs, topic=topic, task_info=task_info,
            resources=resources,
        )
        if self.proxy_policy is not None:
            record = self.proxy_policy.apply(record, stage="inputs")
        record.mark_timestamp("input_sent")
        data = wrap_record("task", record, self.max_frame)
        with self._lock:
            if self._closed:
                raise QueueClosedError("queue is closed")
            self._outbound.append(data)
            self._out_ready.notify_all()
        return record.task_id

    def get_result(self, topic: str = DEFAULT_TOPIC, timeout_s: float | None = None):
        if topic not in self.topics:
            raise UnknownTopicError(topic)
        deadline = None if timeout_s is None else _clock.mono_now() + timeout_s
        with self._lock:
            queue = self._results[topic]
            while True:
                if self._closed:
                    raise QueueClosedError("queue is closed")
                if queue:
                    data = queue.popleft()
                    break
                if deadline is None:
                    self._result_ready.wait()
                else:
                    remaining = deadline - _clock.mono_now()
                    if remaining <= 0:
                        return None
                    self._result_ready.wait(remaining)
        record = unwrap_record(data)
        record.mark_timestamp("result_received")
        return record

    # -- wire handling --------------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while True:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            set_nodelay(conn)
            if not self._handshake(conn):
                conn.close()
                continue
            with self._lock:
                if self._conn is not None or self._closed:
                    conn.close()
                    continue
                self._conn = conn
            sender = threading.Thread(
                target=self._send_loop, args=(conn,), name="queue-send", daemon=True
            )
            reader = threading.Thread(
                target=self._read_loop, args=(conn,), name="queue-read", daemon=True
            )
            sender.start()
            reader.start()
            self._threads.extend([sender, reader])

    def _handshake(self, conn: socket.socket) -> bool:
        try:
            raw = read_frame_or_eof(conn, self.max_frame)
            if raw is None:
                return False
            hello = json.loads(raw.decode("utf-8"))
            if hello.get("kind") != "hello" or hello.get("role") != "server":
                return False
            write_frame(
                conn,
                json.dumps(
                    {
                        "v": PROTOCOL_VERSION,
                        "kind": "hello",
                        "role": "client",
                        "topics": sorted(self.topics),
                    }
                ).encode("utf-8"),
                self.max_frame,
            )
            return True
        except (OSError, ValueError, FrameError):
            return False

    def _send_loop(self, conn: socket.socket) -> None:
        while True:
            with self._lock:
                while not self._outbound and not self._closed:
                    self._out_ready.wait()
                if self._closed and not self._outbound:
                    return
                data = self._outbound.popleft()
            try:
                write_frame(conn, data, self.max_frame)
            except OSError:
                return

    def _read_loop(self, conn: socket.socket) -> None:
        while True:
            try:
                raw = read_frame_or_eof(conn, self.max_frame)
            except (OSError, FrameError, ConnectionLostError):
                raw = None
            if raw is None:
                with self._lock:
                    if self._conn is conn:
                        self._conn = None
                return
            try:
                kind, topic = _peek_wrapper(raw)
            except (ValueError, AttributeError):
                continue
            if kind != "result":
                continue
            with self._lock:
                queue = self._results.get(topic)
                if queue is None:
                    continue
                queue.append(raw)
                self._result_ready.notify_all()


class TcpServerQueues:
    """Task-server side: dials the agent endpoint and exchanges records.

    Exposes the server half of the queue interface (``get_task`` and
    ``send_result``).
    """

    def __init__(self, endpoint: str, proxy_policy=None, max_frame: int = DEFAULT_MAX_FRAME):
        self.endpoint = endpoint
        self.proxy_policy = proxy_policy
        self.max_frame = max_frame
        self.topics: frozenset = frozenset({DEFAULT_TOPIC})
        self._lock = threading.Lock()
        self._task_ready = threading.Condition(self._lock)
        self._tasks: deque[bytes] = deque()
        self._conn: socket.socket | None = None
        self._send_lock = threading.Lock()
        self._closed = False
        self._reader: threading.Thread | None = None

    def connect(self, timeout_s: float = 10.0) -> "TcpServerQueues":
        host, _, port = self.endpoint.rpartition(":")
        conn = socket.create_connection((host, int(port)), timeout=timeout_s)
        set_nodelay(conn)
        conn.settimeout(None)
        write_frame(
            conn,
            json.dumps(
                {"v": PROTOCOL_VERSION, "kind": "hello", "role": "server", "topics": []}
            ).encode("utf-8"),
            self.max_frame,
        )
        raw = read_frame_or_eof(conn, self.max_frame)
        if raw is None:
            raise QueueClosedError("endpoint refused the queue handshake")
        ack = json.loads(raw.decode("utf-8"))
        if ack.get("kind") != "hello" or ack.get("role") != "client":
            conn.close()
            raise QueueClosedError("bad queue handshake reply")
        self.topics = frozenset(ack.get("topics", [])) | {DEFAULT_TOPIC}
        self._conn = conn
        self._reader = threading.Thread(target=self._read_loop, name="queue-read", daemon=True)
        self._reader.start()
        return self

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            self._task_ready.notify_all()
            conn = self._conn
        if conn is not None:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        if self._reader is not None and self._reader is not threading.current_thread():
            self._reader.join(timeout=5.0)

    @property
    def closed(self) -> bool:
        return self._closed

    def __enter__(self) -> "TcpServerQueues":
        return self.connect()

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- server half -----------------------------------------------------------

    def get_task(self, timeout_s: float | None = None):
        deadline = None if timeout_s is None else _clock.mono_now() + timeout_s
        with self._lock:
            while True:
                if self._closed:
                    raise QueueClosedError("queue is closed")
                if self._tasks:
                    data = self._tasks.popleft()
                    break
                if deadline is None:
                    self._task_ready.wait()
                else:
                    remaining = deadline - _clock.mono_now()
                    if remaining <= 0:
                        return None
                    self._task_ready.wait(remaining)
        record = unwrap_record(data)
        record.mark_timestamp("task_received_by_server")
        return record

    def send_result(self, record: ResultRecord) -> None:
        if self.proxy_policy is not None:
            record = self.proxy_policy.apply(record, stage="result")
        record.mark_timestamp("result_sent")
        data = wrap_record("result", record, self.max_frame)
        with self._send_lock:
            conn = self._conn
            if self._closed or conn is None:
                raise QueueClosedError("queue is closed")
            try:
                write_frame(conn, data, self.max_frame)
            except OSError as exc:
                raise QueueClosedError(f"queue connection lost: {exc}") from exc

    # -- wire handling -----------------------------------------------------------

    def _read_loop(self) -> None:
        conn = self._conn
        assert conn is not None
        while True:
            try:
                raw = read_frame_or_eof(conn, self.max_frame)
            except (OSError, FrameError, ConnectionLostError):
                raw = None
            if raw is None:
                # Peer gone: behave as a closed queue so the server drains.
                with self._lock:
                    self._closed = True
                    self._task_ready.notify_all()
                return
            try:
                kind, _ = _peek_wrapper(raw)
            except (ValueError, AttributeError):
                continue
            if kind != "task":
                continue
            with self._lock:
                self._tasks.append(raw)
                self._task_ready.notify_all()
