"""Steering runtime: concurrent agents over shared state with a done signal.

A Thinker hosts one thread per registered agent. Agent kinds differ only in
what triggers the body:

* ``startup`` runs once when the Thinker starts.
* ``long_running`` runs once and owns its own loop (it should watch
  ``context.done``).
* ``result_processor`` runs for every result arriving on its topic.
* ``event_processor`` runs whenever its named event is set.
* ``task_submitter`` runs each time it can acquire its slot count from a
  resource pool.

Short-bodied agents run holding a shared context lock by default, so user
state needs no extra synchronization; ``long_running`` bodies run unlocked
and take ``context.lock`` themselves when touching shared state.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping

from . import _clock
from .errors import AgentFailureError, QueueClosedError

_POLL_S = 0.05  # blocking primitives re-check done at this cadence


class AgentKind(str, Enum):
    STARTUP = "startup"
    LONG_RUNNING = "long_running"
    RESULT_PROCESSOR = "result_processor"
    EVENT_PROCESSOR = "event_processor"
    TASK_SUBMITTER = "task_submitter"


class ResourceCounter:
    """Named pools of countable slots with blocking, all-or-nothing acquire."""

    def __init__(self, pools: Mapping[str, int] | None = None):
        self._cond = threading.Condition()
        self._available: dict[str, int] = {}
        self._total: dict[str, int] = {}
        for name, total in (pools or {}).items():
            self.add_pool(name, total)

    def add_pool(self, name: str, total: int) -> None:
        if total < 0:
            raise ValueError("pool size must be >= 0")
        with self._cond:
            if name in self._total:
                raise ValueError(f"pool {name!r} already exists")
            self._total[name] = total
            self._available[name] = total
            self._cond.notify_all()

    def _check_pool(self, name: str) -> None:
        if name not in self._total:
            raise KeyError(name)

    def available(self, pool: str) -> int:
        with self._cond:
            self._check_pool(pool)
            return self._available[pool]

    def total(self, pool: str) -> int:
        with self._cond:
            self._check_pool(pool)
            return self._total[pool]

    def snapshot(self) -> dict[str, tuple[int, int]]:
        with self._cond:
            return {name: (self._available[name], self._total[name]) for name in self._total}

    def allocate(self, pool: str, n: int = 1, timeout_s: float | None = None) -> bool:
        if n < 1:
            raise ValueError("allocation count must be >= 1")
        deadline = None if timeout_s is None else _clock.mono_now() + timeout_s
        with self._cond:
            self._check_pool(pool)
            while self._available[pool] < n:
                if deadline is None:
                    self._cond.wait()
                else:
                    remaining = deadline - _clock.mono_now()
                    if remaining <= 0:
                        return False
                    self._cond.wait(remaining)
            self._available[pool] -= n
            return True

    def release(self, pool: str, n: int = 1) -> None:
        if n < 1:
            raise ValueError("release count must be >= 1")
        with self._cond:
            self._check_pool(pool)
            if self._available[pool] + n > self._total[pool]:
                raise ValueError(
                    f"release of {n} exceeds pool {pool!r} "
                    f"({self._available[pool]} of {self._total[pool]} free)"
                )
            self._available[pool] += n
            self._cond.notify_all()

    def reallocate(
        self, from_pool: str, to_pool: str, n: int, timeout_s: float | None = None
    ) -> bool:
        """Move ``n`` slots of capacity between pools; conserves the grand total."""
        if n < 1:
            raise ValueError("reallocation count must be >= 1")
        with self._cond:
            self._check_pool(from_pool)
            self._check_pool(to_pool)
        if from_pool == to_pool:
            return True
        if not self.allocate(from_pool, n, timeout_s=timeout_s):
            return False
        with self._cond:
            # The n acquired slots leave from_pool's total and arrive in
            # to_pool as free capacity.
            self._total[from_pool] -= n
            self._total[to_pool] += n
            self._available[to_pool] += n
            self._cond.notify_all()
        return True


class CoalescingEvent:
    """Event whose sets during a handler run collapse into one extra run."""

    def __init__(self):
        self._cond = threading.Condition()
        self._generation = 0

    def set(self) -> None:
        with self._cond:
            self._generation += 1
            self._cond.notify_all()

    def generation(self) -> int:
        with self._cond:
            return self._generation

    def wait_newer(self, seen: int, timeout_s: float) -> int | None:
        """Return the current generation once it exceeds ``seen``, else None."""
        with self._cond:
            if self._generation > seen:
                return self._generation
            self._cond.wait(timeout_s)
            if self._generation > seen:
                return self._generation
            return None


@dataclass
class AgentSpec:
    """Declaration of one steering agent and its trigger binding."""

    name: str
    kind: AgentKind | str
    body: Callable
    binding: Any = None  # topic | event name | (pool, slots), per kind
    startup: bool = False  # long_running only: run once at startup instead
    locked: bool = True  # hold the context lock around body invocations

    def __post_init__(self):
        self.kind = AgentKind(self.kind)
        if not self.name:
            raise ValueError("agent name must be non-empty")
        if self.startup:
            if self.kind is not AgentKind.LONG_RUNNING:
                raise ValueError("the startup flag applies to long_running agents only")
            self.kind = AgentKind.STARTUP
        if self.kind is AgentKind.RESULT_PROCESSOR:
            if not isinstance(self.binding, str) or not self.binding:
                raise ValueError("result_processor needs a topic name binding")
        elif self.kind is AgentKind.EVENT_PROCESSOR:
            if not isinstance(self.binding, str) or not self.binding:
                raise ValueError("event_processor needs an event name binding")
        elif self.kind is AgentKind.TASK_SUBMITTER:
            try:
                pool, slots = self.binding
            except (TypeError, ValueError):
                raise ValueError("task_submitter needs a (pool, slots) binding") from None
            if not isinstance(pool, str) or int(slots) < 1:
                raise ValueError("task_submitter binding must be (pool name, slots >= 1)")
            self.binding = (pool, int(slots))
        elif self.binding is not None:
            raise ValueError(f"{self.kind.value} agents take no binding")


class ThinkerContext:
    """Shared state visible to every agent of one Thinker."""

    def __init__(self, queues, resources: ResourceCounter | None = None, state: dict | None = None):
        self.queues = queues
        self.resources = resources if resources is not None else ResourceCounter()
        self.state = state if state is not None else {}
        self.done = threading.Event()
        self.lock = threading.RLock()
        self._events: dict[str, CoalescingEvent] = {}

    @property
    def is_done(self) -> bool:
        return self.done.is_set()

    def set_done(self) -> None:
        self.done.set()

    def declare_event(self, name: str) -> CoalescingEvent:
        event = self._events.get(name)
        if event is None:
            event = self._events[name] = CoalescingEvent()
        return event

    def event(self, name: str) -> CoalescingEvent:
        try:
            return self._events[name]
        except KeyError:
            raise KeyError(f"unknown event: {name!r}") from None

    def set_event(self, name: str) -> None:
        self.event(name).set()


class Thinker:
    """Runs registered agents concurrently until done, surfacing failures."""

    def __init__(
        self,
        queues,
        resources: ResourceCounter | None = None,
        state: dict | None = None,
        events: tuple = (),
    ):
        self.context = ThinkerContext(queues, resources=resources, state=state)
        for name in events:
            self.context.declare_event(name)
        self._agents: dict[str, AgentSpec] = {}
        self._failures: list[AgentFailureError] = []
        self._failure_lock = threading.Lock()
        self._started = False

    # -- registration ---------------------------------------------------------

    def register_agent(self, spec: AgentSpec) -> None:
        if self._started:
            raise RuntimeError("cannot register agents after run() started")
        if spec.name in self._agents:
            raise ValueError(f"duplicate agent name: {spec.name!r}")
        if spec.kind is AgentKind.EVENT_PROCESSOR:
            self.context.declare_event(spec.binding)
        self._agents[spec.name] = spec

    # -- control ---------------------------------------------------------------

    def set_done(self) -> None:
        self.context.set_done()

    def set_event(self, name: str) -> None:
        self.context.set_event(name)

    # -- execution ---------------------------------------------------------------

    def run(self) -> None:
        """Start every agent, wait for all to exit, then surface any failure."""
        if not self._agents:
            raise ValueError("no agents registered")
        if self._started:
            raise RuntimeError("run() may only be called once")
        self._started = True
        threads = [
            threading.Thread(target=self._agent_main, args=(spec,), name=f"agent-{spec.name}")
            for spec in self._agents.values()
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        self.context.set_done()
        if self._failures:
            raise self._failures[0]

    def _record_failure(self, spec: AgentSpec, exc: BaseException) -> None:
        failure = AgentFailureError(spec.name, exc)
        failure.__cause__ = exc
        with self._failure_lock:
            self._failures.append(failure)
        self.context.set_done()

    def _invoke(self, spec: AgentSpec, *args) -> None:
        if spec.locked:
            with self.context.lock:
                spec.body(self.context, *args)
        else:
            spec.body(self.context, *args)

    def _agent_main(self, spec: AgentSpec) -> None:
        ctx = self.context
        try:
            if spec.kind is AgentKind.STARTUP:
                self._invoke(spec)
            elif spec.kind is AgentKind.LONG_RUNNING:
                # Long-running bodies own their loop and synchronize
                # explicitly; the shared lock is not held for them.
                spec.body(ctx)
            elif spec.kind is AgentKind.RESULT_PROCESSOR:
                self._result_loop(spec)
            elif spec.kind is AgentKind.EVENT_PROCESSOR:
                self._event_loop(spec)
            elif spec.kind is AgentKind.TASK_SUBMITTER:
                self._submitter_loop(spec)
        except QueueClosedError:
            ctx.set_done()
        except Exception as exc:  # noqa: BLE001 - fail-fast surface
            self._record_failure(spec, exc)

    def _result_loop(self, spec: AgentSpec) -> None:
        ctx = self.context
        topic = spec.binding
        while not ctx.done.is_set():
            record = ctx.queues.get_result(topic, timeout_s=_POLL_S)
            if record is None:
                continue
            self._invoke(spec, record)
            record.mark_timestamp("result_processed")

    def _event_loop(self, spec: AgentSpec) -> None:
        ctx = self.context
        event = ctx.event(spec.binding)
        seen = 0
        while not ctx.done.is_set():
            generation = event.wait_newer(seen, _POLL_S)
            if generation is None:
                continue
            self._invoke(spec)
            # Sets that landed during the body leave generation above
            # `generation`, producing exactly one more run.
            seen = generation

    def _submitter_loop(self, spec: AgentSpec) -> None:
        ctx = self.context
        pool, slots = spec.binding
        while not ctx.done.is_set():
            if not ctx.resources.allocate(pool, slots, timeout_s=_POLL_S):
                continue
            if ctx.done.is_set():
                # Shutdown won the race; hand the slots back untouched.
                ctx.resources.release(pool, slots)
                return
            self._invoke(spec)
