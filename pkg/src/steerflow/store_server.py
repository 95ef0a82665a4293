"""In-memory key-value store served over TCP for the data fabric.

Protocol: each request is a Frame-wrapped JSON header, with ``put`` bodies
sent as raw bytes immediately after the header frame. Responses mirror the
shape: a Frame-wrapped JSON header, then raw bytes for ``get`` hits.
"""

from __future__ import annotations

import json
import socket
import threading

from .errors import ConnectionLostError, FrameError
from .framing import DEFAULT_MAX_FRAME, read_frame_or_eof, recv_exact, set_nodelay, write_frame
from .store import StoreMetrics


class MemoryTcpStoreServer:
    """Byte store with an optional total-capacity cap.

    Keys are written once and read many times; ``evict`` frees them. A put
    that would push the held total past ``capacity_bytes`` is refused with
    code ``full`` (the body is still drained so the connection stays
    usable).
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        capacity_bytes: int | None = None,
        max_frame: int = DEFAULT_MAX_FRAME,
    ):
        self._host = host
        self._port = port
        self.capacity_bytes = capacity_bytes
        self.max_frame = max_frame
        self.metrics = StoreMetrics()
        self._data: dict[str, bytes] = {}
        self._held_bytes = 0
        self._lock = threading.Lock()
        self._listener: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._stopping = threading.Event()

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "MemoryTcpStoreServer":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self._host, self._port))
        listener.listen(64)
        self._listener = listener
        self._port = listener.getsockname()[1]
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="store-accept", daemon=True
        )
        self._accept_thread.start()
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._listener is not None:
            try:
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass  # wakes a blocked accept(); close alone does not on Linux
            try:
                self._listener.close()
            except OSError:
                pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5.0)

    def __enter__(self) -> "MemoryTcpStoreServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()

    @property
    def locator(self) -> str:
        return f"{self._host}:{self._port}"

    # -- connection handling -------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            set_nodelay(conn)
            thread = threading.Thread(
                target=self._serve_connection, args=(conn,), name="store-conn", daemon=True
            )
            thread.start()

    def _serve_connection(self, conn: socket.socket) -> None:
        with conn:
            while True:
                try:
                    raw = read_frame_or_eof(conn, self.max_frame)
                except (ConnectionLostError, FrameError, OSError):
                    return
                if raw is None:
                    return
                try:
                    header = json.loads(raw.decode("utf-8"))
                    if not isinstance(header, dict):
                        raise ValueError("header is not an object")
                except (ValueError, UnicodeDecodeError):
                    self._reply(conn, {"ok": False, "error": "bad header", "code": "protocol"})
                    return
                try:
                    if not self._handle(conn, header):
                        return
                except (ConnectionLostError, OSError):
                    return

    def _reply(self, conn: socket.socket, header: dict, body: bytes = b"") -> None:
        write_frame(conn, json.dumps(header).encode("utf-8"), self.max_frame)
        if body:
            conn.sendall(body)

    def _handle(self, conn: socket.socket, header: dict) -> bool:
        op = header.get("op")
        key = header.get("key", "")
        if op == "put":
            length = int(header.get("len", 0))
            if length > self.max_frame:
                self._reply(conn, {"ok": False, "error": "payload too large", "code": "protocol"})
                return False
            data = recv_exact(conn, length) if length else b""
            with self._lock:
                previous = len(self._data.get(key, b""))
                projected = self._held_bytes - previous + len(data)
                if self.capacity_bytes is not None and projected > self.capacity_bytes:
                    full = True
                else:
                    full = False
                    self._data[key] = data
                    self._held_bytes = projected
            if full:
                self._reply(
                    conn,
                    {"ok": False, "error": "store capacity exceeded", "code": "full"},
                )
            else:
                self.metrics.count(puts=1, bytes_in=len(data))
                self._reply(conn, {"ok": True})
            return True
        if op == "get":
            with self._lock:
                data = self._data.get(key)
            if data is None:
                self._reply(conn, {"ok": False, "error": "no such key", "code": "missing"})
            else:
                self.metrics.count(gets=1, bytes_out=len(data))
                self._reply(conn, {"ok": True, "len": len(data)}, body=data)
            return True
        if op == "evict":
            with self._lock:
                data = self._data.pop(key, None)
                if data is not None:
                    self._held_bytes -= len(data)
            if data is not None:
                self.metrics.count(evictions=1)
            self._reply(conn, {"ok": True})
            return True
        if op == "exists":
            with self._lock:
                present = key in self._data
            self._reply(conn, {"ok": True, "exists": present})
            return True
        if op == "stats":
            stats = self.metrics.snapshot()
            with self._lock:
                stats["keys"] = len(self._data)
                stats["held_bytes"] = self._held_bytes
            self._reply(conn, {"ok": True, "stats": stats})
            return True
        self._reply(conn, {"ok": False, "error": f"unknown op {op!r}", "code": "protocol"})
        return False
