"""Topic-partitioned task queues connecting steering agents to the task server.

Both implementations (in-process here, TCP in ``tcp_queue``) expose the same
four calls: ``send_inputs``/``get_result`` on the agent side and
``get_task``/``send_result`` on the server side. Records always travel as
canonical envelope bytes, including in-process, so serialization cost and
payload behavior are identical no matter which transport is configured.
"""

from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import dataclass
from typing import Mapping

from . import _clock
from .errors import FrameError, QueueClosedError, UnknownTopicError
from .framing import DEFAULT_MAX_FRAME
from .records import (
    ResourceSpec,
    ResultRecord,
    envelope_to_record,
    new_task_request,
    record_to_envelope,
)

DEFAULT_TOPIC = "default"


@dataclass
class QueueConfig:
    kind: str = "in_process"  # "in_process" | "tcp"
    endpoint: str | None = None  # host:port, tcp only
    topics: frozenset = frozenset({DEFAULT_TOPIC})
    proxy_policy: object | None = None  # datafabric.ThresholdPolicy
    max_frame: int = DEFAULT_MAX_FRAME

    def __post_init__(self):
        self.topics = frozenset(self.topics)
        if DEFAULT_TOPIC not in self.topics:
            raise ValueError(f'topics must include "{DEFAULT_TOPIC}"')
        if self.kind == "tcp" and not self.endpoint:
            raise ValueError("tcp queues require an endpoint")
        if self.kind == "in_process" and self.endpoint:
            raise ValueError("in_process queues take no endpoint")
        if self.kind not in ("in_process", "tcp"):
            raise ValueError(f"unknown queue kind: {self.kind!r}")


def encode_for_transport(record: ResultRecord, max_frame: int = DEFAULT_MAX_FRAME) -> bytes:
    """Envelope a record, charging the serialization time to its time_costs."""
    start = _clock.mono_now()
    env = record_to_envelope(record)
    costs = env["time_costs"]
    costs["serialization_s"] = costs.get("serialization_s", 0.0) + (_clock.mono_now() - start)
    data = json.dumps(env, separators=(",", ":"), sort_keys=True).encode("utf-8")
    if len(data) > max_frame:
        raise FrameError(f"encoded record of {len(data)} bytes exceeds frame cap of {max_frame}")
    return data


def decode_from_transport(data: bytes) -> ResultRecord:
    """Inverse of ``encode_for_transport``; charges deserialization time."""
    start = _clock.mono_now()
    record = envelope_to_record(json.loads(data.decode("utf-8")))
    record.add_time_cost("deserialization_s", _clock.mono_now() - start)
    return record


class InProcessQueues:
    """Thread-safe queue pair living inside one process.

    Records still pass through the canonical codec on every hop so that
    timing and size behavior match the TCP transport.
    """

    def __init__(self, topics=(DEFAULT_TOPIC,), proxy_policy=None, max_frame=DEFAULT_MAX_FRAME):
        self.topics = frozenset(topics) | {DEFAULT_TOPIC}
        self.proxy_policy = proxy_policy
        self.max_frame = max_frame
        self._lock = threading.Lock()
        self._task_ready = threading.Condition(self._lock)
        self._result_ready = threading.Condition(self._lock)
        self._tasks: deque[bytes] = deque()
        self._results: dict[str, deque[bytes]] = {t: deque() for t in self.topics}
        self._closed = False

    # -- agent side ---------------------------------------------------------

    def send_inputs(
        self,
        method: str,
        args: list | tuple = (),
        kwargs: Mapping | None = None,
        topic: str = DEFAULT_TOPIC,
        task_info: Mapping | None = None,
        resources: ResourceSpec | None = None,
    ) -> str:
        self._check_topic(topic)
        record = new_task_request(
            method, args=args, kwargs=kwargs, topic=topic, task_info=task_info,
            resources=resources,
        )
        if self.proxy_policy is not None:
            record = self.proxy_policy.apply(record, stage="inputs")
        record.mark_timestamp("input_sent")
        data = encode_for_transport(record, max_frame=self.max_frame)
        with self._lock:
            if self._closed:
                raise QueueClosedError("queue is closed")
            self._tasks.append(data)
            self._task_ready.notify_all()
        return record.task_id

    def get_result(self, topic: str = DEFAULT_TOPIC, timeout_s: float | None = None):
        self._check_topic(topic)
        data = self._pop(self._results[topic], self._result_ready, timeout_s)
        if data is None:
            return None
        record = decode_from_transport(data)
        record.mark_timestamp("result_received")
        return record

    # -- server side --------------------------------------------------------

    def get_task(self, timeout_s: float | None = None):
        data = self._pop(self._tasks, self._task_ready, timeout_s)
        if data is None:
            return None
        record = decode_from_transport(data)
        record.mark_timestamp("task_received_by_server")
        return record

    def send_result(self, record: ResultRecord) -> None:
        self._check_topic(record.topic)
        if self.proxy_policy is not None:
            record = self.proxy_policy.apply(record, stage="result")
        record.mark_timestamp("result_sent")
        data = encode_for_transport(record, max_frame=self.max_frame)
        with self._lock:
            if self._closed:
                raise QueueClosedError("queue is closed")
            self._results[record.topic].append(data)
            self._result_ready.notify_all()

    # -- lifecycle ----------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._task_ready.notify_all()
            self._result_ready.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed

    # -- internals ----------------------------------------------------------

    def _check_topic(self, topic: str) -> None:
        if topic not in self.topics:
            raise UnknownTopicError(topic)

    def _pop(self, queue: deque, ready: threading.Condition, timeout_s: float | None):
        deadline = None if timeout_s is None else _clock.mono_now() + timeout_s
        with self._lock:
            while True:
                if self._closed:
                    raise QueueClosedError("queue is closed")
                # Waiters on the shared condition race for items; re-check
                # emptiness after every wake.
                if queue:
                    return queue.popleft()
                if deadline is None:
                    ready.wait()
                else:
                    remaining = deadline - _clock.mono_now()
                    if remaining <= 0:
                        return None
                    ready.wait(remaining)
