"""Wiring helper assembling a full engine for benchmark runs.

One harness owns a queue pair, a task server on its own thread, an executor
(local pool or remote-worker listener), and, when a proxy threshold is set,
a data fabric store: a shared temp directory for in-process queues, an
in-memory TCP store for TCP queues.
"""

from __future__ import annotations

import shutil
import tempfile
import threading

from ..queues import InProcessQueues
from ..remote import RemoteExecutor
from ..store import FileDirStore, MemoryStoreClient, ThresholdPolicy
from ..store_server import MemoryTcpStoreServer
from ..taskserver import LocalExecutor, TaskServer
from ..tcp_queue import TcpServerQueues, TcpThinkerQueues
from .tasks import BENCH_METHODS


class EngineHarness:
    """Queue + task server + executor, started together and torn down together."""

    def __init__(
        self,
        queue_kind: str = "inproc",
        topics=("default",),
        slots: int = 1,
        methods=None,
        proxy_threshold_bytes: int | None = None,
        executor_kind: str = "local",
        listen: str | None = None,
        expect_workers: int = 0,
        heartbeat_s: float = 5.0,
    ):
        if queue_kind not in ("inproc", "tcp"):
            raise ValueError(f"unknown queue kind: {queue_kind!r}")
        if executor_kind not in ("local", "remote"):
            raise ValueError(f"unknown executor kind: {executor_kind!r}")
        self.queue_kind = queue_kind
        self.topics = tuple(topics)
        self.slots = slots
        self.methods = dict(methods) if methods is not None else dict(BENCH_METHODS)
        self.proxy_threshold_bytes = proxy_threshold_bytes
        self.executor_kind = executor_kind
        self.listen = listen
        self.expect_workers = expect_workers
        self.heartbeat_s = heartbeat_s

        self.queues = None  # agent half
        self.server_queues = None  # server half
        self.executor = None
        self.server: TaskServer | None = None
        self.store_server: MemoryTcpStoreServer | None = None
        self._store_dir: str | None = None
        self._serve_thread: threading.Thread | None = None

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "EngineHarness":
        policy = self._build_policy()

        if self.queue_kind == "inproc":
            queue = InProcessQueues(topics=self.topics, proxy_policy=policy)
            self.queues = queue
            self.server_queues = queue
        else:
            listener = TcpThinkerQueues(topics=self.topics, proxy_policy=policy).start()
            self.queues = listener
            self.server_queues = TcpServerQueues(
                listener.endpoint, proxy_policy=policy
            ).connect()

        if self.executor_kind == "local":
            self.executor = LocalExecutor(slots=self.slots)
        else:
            host, _, port = (self.listen or "127.0.0.1:0").rpartition(":")
            self.executor = RemoteExecutor(
                host=host or "127.0.0.1",
                port=int(port),
                heartbeat_interval_s=self.heartbeat_s,
            ).start()

        self.server = TaskServer(methods=tuple(self.methods.values()))
        self._serve_thread = threading.Thread(
            target=self.server.serve,
            args=(self.server_queues, self.executor),
            name="task-server",
            daemon=True,
        )
        self._serve_thread.start()
        if self.executor_kind == "remote" and self.expect_workers:
            if not self.executor.wait_for_workers(self.expect_workers, timeout_s=30.0):
                self.close()
                raise TimeoutError(
                    f"expected {self.expect_workers} workers to register within 30 s"
                )
        return self

    def _build_policy(self) -> ThresholdPolicy | None:
        if self.proxy_threshold_bytes is None:
            return None
        if self.queue_kind == "inproc":
            self._store_dir = tempfile.mkdtemp(prefix="steerflow-store-")
            store = FileDirStore(self._store_dir)
        else:
            self.store_server = MemoryTcpStoreServer().start()
            store = MemoryStoreClient(self.store_server.locator)
        return ThresholdPolicy(store=store, threshold_bytes=self.proxy_threshold_bytes)

    def close(self) -> None:
        if self.queues is not None:
            self.queues.close()
        if self.server_queues is not None and self.server_queues is not self.queues:
            self.server_queues.close()
        if self._serve_thread is not None:
            self._serve_thread.join(timeout=90.0)
        if self.executor is not None:
            self.executor.shutdown()
        if self.store_server is not None:
            self.store_server.stop()
        if self._store_dir is not None:
            shutil.rmtree(self._store_dir, ignore_errors=True)

    def __enter__(self) -> "EngineHarness":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.close()
