"""Task server: method registry, execution, state cache, local executor.

The server pulls task records off the queue and hands them to an executor.
Executors run ``execute_task``, which resolves proxied inputs, invokes the
registered callable, and fills in the result, failure, and timing fields.
Completion posting happens on executor threads, so pulling the next task is
never blocked behind post-processing of the previous one.
"""

from __future__ import annotations

import threading
import traceback
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable, Mapping

from ._clock import mono_now as _mono
from .errors import (
    CorruptionError,
    MissingKeyError,
    QueueClosedError,
    StoreUnreachableError,
)
from .records import ProxyRef, ResourceSpec, ResultRecord, payload_to_value
from .store import Resolver


@dataclass(frozen=True)
class MethodRegistration:
    """A dispatchable task function.

    When ``pass_context`` is set the callable receives a ``WorkerContext``
    as its first argument, giving it access to the per-worker state cache.
    """

    name: str
    fn: Callable
    default_resources: ResourceSpec = field(default_factory=ResourceSpec)
    pass_context: bool = False


class StateCache:
    """Per-worker LRU cache for expensive initialization (models, tables).

    ``get_or_init`` guarantees the initializer for a key runs exactly once
    even under concurrent first callers; failures propagate and cache
    nothing.
    """

    def __init__(self, capacity: int = 16):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self._key_locks: dict = {}

    def __contains__(self, key) -> bool:
        with self._lock:
            return key in self._entries

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def get_or_init(self, key, initializer: Callable[[], object]):
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
                return self._entries[key]
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            with self._lock:
                if key in self._entries:
                    self._entries.move_to_end(key)
                    return self._entries[key]
            value = initializer()
            with self._lock:
                self._entries[key] = value
                self._entries.move_to_end(key)
                while len(self._entries) > self.capacity:
                    self._entries.popitem(last=False)
                self._key_locks.pop(key, None)
            return value


@dataclass
class WorkerContext:
    """Execution-side context handed to ``pass_context`` task functions."""

    state_cache: StateCache
    resolver: Resolver


def execute_task(
    registry: Mapping[str, MethodRegistration],
    record: ResultRecord,
    cache: StateCache | None = None,
    resolver: Resolver | None = None,
) -> ResultRecord:
    """Run one task record to completion in place.

    Top-level ProxyRef arguments are resolved into locals before the body
    runs; the record keeps the references so the completed record stays
    small on the way back.
    """
    cache = cache if cache is not None else StateCache()
    resolver = resolver if resolver is not None else Resolver()
    record.mark_timestamp("compute_started")
    try:
        registration = registry.get(record.method)
        if registration is None:
            record.set_failure(f"no such method: {record.method!r}", "method-not-found")
            return record

        def materialize(value):
            if isinstance(value, ProxyRef):
                return payload_to_value(resolver.resolve(value))
            return value

        try:
            resolve_start = _mono()
            args = [materialize(a) for a in record.args]
            kwargs = {k: materialize(v) for k, v in record.kwargs.items()}
            has_refs = any(isinstance(a, ProxyRef) for a in record.args) or any(
                isinstance(v, ProxyRef) for v in record.kwargs.values()
            )
            if has_refs:
                record.add_time_cost("proxy_resolve_s", _mono() - resolve_start)
        except (MissingKeyError, StoreUnreachableError, CorruptionError) as exc:
            record.set_failure(f"input data unavailable: {exc}", "data-unavailable")
            return record

        try:
            if registration.pass_context:
                value = registration.fn(WorkerContext(cache, resolver), *args, **kwargs)
            else:
                value = registration.fn(*args, **kwargs)
        except Exception as exc:  # noqa: BLE001 - converted into a failed record
            detail = traceback.format_exception_only(type(exc), exc)[-1].strip()
            record.set_failure(detail, "exception")
            return record
        record.set_success(value)
        return record
    finally:
        record.mark_timestamp("compute_ended")
        started = record.timestamps.get("compute_started")
        ended = record.timestamps.get("compute_ended")
        record.time_costs["running_s"] = ended[1] - started[1]


class LocalExecutor:
    """Pool of worker threads executing tasks inside the server process."""

    def __init__(
        self,
        slots: int = 1,
        cache: StateCache | None = None,
        resolver: Resolver | None = None,
    ):
        if slots < 1:
            raise ValueError("slots must be >= 1")
        self.slots = slots
        self.cache = cache if cache is not None else StateCache()
        self.resolver = resolver if resolver is not None else Resolver()
        self._registry: Mapping[str, MethodRegistration] = {}
        self._queue: deque = deque()
        self._cond = threading.Condition()
        self._in_flight = 0
        self._threads: list[threading.Thread] = []
        self._stopping = False

    def start(self, registry: Mapping[str, MethodRegistration]) -> None:
        self._registry = dict(registry)
        for index in range(self.slots):
            thread = threading.Thread(
                target=self._worker_loop, name=f"local-exec-{index}", daemon=True
            )
            thread.start()
            self._threads.append(thread)

    def submit(self, record: ResultRecord, on_complete: Callable[[ResultRecord], None]) -> None:
        with self._cond:
            if self._stopping:
                raise RuntimeError("executor is shut down")
            self._queue.append((record, on_complete))
            self._cond.notify()

    def drain(self, timeout_s: float | None = None) -> bool:
        deadline = None if timeout_s is None else _mono() + timeout_s
        with self._cond:
            while self._queue or self._in_flight:
                if deadline is None:
                    self._cond.wait()
                else:
                    remaining = deadline - _mono()
                    if remaining <= 0:
                        return False
                    self._cond.wait(remaining)
            return True

    def shutdown(self) -> None:
        with self._cond:
            self._stopping = True
            self._cond.notify_all()
        for thread in self._threads:
            thread.join(timeout=5.0)

    def _worker_loop(self) -> None:
        while True:
            with self._cond:
                while not self._queue and not self._stopping:
                    self._cond.wait()
                if self._stopping and not self._queue:
                    return
                record, on_complete = self._queue.popleft()
                self._in_flight += 1
            try:
                execute_task(self._registry, record, cache=self.cache, resolver=self.resolver)
                on_complete(record)
            finally:
                with self._cond:
                    self._in_flight -= 1
                    self._cond.notify_all()


class TaskServer:
    """Pulls task records from a queue and executes them via an executor."""

    def __init__(self, methods: tuple = ()):
        self._methods: dict[str, MethodRegistration] = {}
        self._serving = False
        self._stop = threading.Event()
        for method in methods:
            self.register_method(method)

    def register_method(self, registration) -> None:
        if self._serving:
            raise RuntimeError("cannot register methods while serving")
        if callable(registration) and not isinstance(registration, MethodRegistration):
            registration = MethodRegistration(name=registration.__name__, fn=registration)
        if registration.name in self._methods:
            raise ValueError(f"duplicate method name: {registration.name!r}")
        self._methods[registration.name] = registration

    @property
    def methods(self) -> Mapping[str, MethodRegistration]:
        return dict(self._methods)

    def stop(self) -> None:
        self._stop.set()

    def serve(self, queue, executor) -> None:
        """Dispatch until the queue closes; drain in-flight work before returning."""
        if not self._methods:
            raise ValueError("no methods registered")
        if self._serving:
            raise RuntimeError("serve() may only be called once at a time")
        self._serving = True
        executor.start(self._methods)

        def on_complete(record: ResultRecord) -> None:
            try:
                queue.send_result(record)
            except QueueClosedError:
                pass

        try:
            while not self._stop.is_set():
                try:
                    record = queue.get_task(timeout_s=0.05)
                except QueueClosedError:
                    break
                if record is None:
                    continue
                executor.submit(record, on_complete)
        finally:
            executor.drain(timeout_s=60.0)
            self._serving = False
