"""Task/result records, the timestamp ledger, and the canonical envelope.

A ``ResultRecord`` is the single structure that carries a task from request
through execution to completion. It crosses every wire and file surface of
the system as a UTF-8 JSON envelope (version field ``"v": 1``) in which
binary values are base64-encoded and proxy references are tagged objects.
"""

from __future__ import annotations

import base64
import json
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from . import _clock
from .errors import DecodeError, LedgerError

ENVELOPE_VERSION = 1

ClockPair = tuple[float, float]  # (wall seconds since epoch, monotonic seconds)


class TaskState(str, Enum):
    PENDING = "pending"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass(frozen=True)
class ResourceSpec:
    """Resource requirements carried with a task request."""

    node_count: int = 1
    cpu_processes: int = 1
    pool: str = "default"

    def __post_init__(self):
        if self.node_count < 1 or self.cpu_processes < 1:
            raise ValueError("resource counts must be >= 1")


@dataclass(frozen=True)
class FailureInfo:
    message: str
    category: str = "exception"


@dataclass(frozen=True)
class ProxyRef:
    """Small reference standing in for a large stored value.

    The referenced bytes live in an object store; ``locator`` is either a
    ``host:port`` endpoint (``memory_tcp``) or a directory path
    (``file_dir``). The encoded form is guaranteed to stay under 1 kB no
    matter how large the payload is.
    """

    store_kind: str  # "memory_tcp" | "file_dir"
    locator: str
    key: str
    size_bytes: int
    content_hash: str  # sha256 hex digest of the stored bytes


# Ledger fields in causal order. Within one process the monotonic halves
# of these stamps never decrease along this order.
TIMESTAMP_FIELDS = (
    "created",
    "input_sent",
    "task_received_by_server",
    "compute_started",
    "compute_ended",
    "result_sent",
    "result_received",
    "result_processed",
)


@dataclass
class TimestampLedger:
    created: ClockPair | None = None
    input_sent: ClockPair | None = None
    task_received_by_server: ClockPair | None = None
    compute_started: ClockPair | None = None
    compute_ended: ClockPair | None = None
    result_sent: ClockPair | None = None
    result_received: ClockPair | None = None
    result_processed: ClockPair | None = None

    def mark(self, event: str) -> None:
        """Record both clocks for ``event``. Double-setting is an error."""
        if event not in TIMESTAMP_FIELDS:
            raise LedgerError(f"unknown timestamp field: {event!r}")
        if getattr(self, event) is not None:
            raise LedgerError(f"timestamp {event!r} already set")
        setattr(self, event, _clock.now())

    def get(self, event: str) -> ClockPair | None:
        if event not in TIMESTAMP_FIELDS:
            raise LedgerError(f"unknown timestamp field: {event!r}")
        return getattr(self, event)


class _AbsentType:
    """Sentinel distinguishing "no value yet" from a stored ``None``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ABSENT"


ABSENT = _AbsentType()


@dataclass
class ResultRecord:
    """The unit of work: request inputs, outcome, and the full timing ledger."""

    task_id: str
    method: str
    topic: str = "default"
    args: list = field(default_factory=list)
    kwargs: dict = field(default_factory=dict)
    value: Any = ABSENT
    success: TaskState = TaskState.PENDING
    failure_info: FailureInfo | None = None
    task_info: dict = field(default_factory=dict)
    resources: ResourceSpec = field(default_factory=ResourceSpec)
    timestamps: TimestampLedger = field(default_factory=TimestampLedger)
    time_costs: dict = field(default_factory=dict)

    @property
    def value_present(self) -> bool:
        return self.value is not ABSENT

    def mark_timestamp(self, event: str) -> "ResultRecord":
        self.timestamps.mark(event)
        return self

    def add_time_cost(self, name: str, seconds: float) -> None:
        self.time_costs[name] = self.time_costs.get(name, 0.0) + seconds

    def set_success(self, value: Any) -> None:
        self.value = value
        self.success = TaskState.SUCCEEDED
        self.failure_info = None

    def set_failure(self, message: str, category: str = "exception") -> None:
        self.value = ABSENT
        self.success = TaskState.FAILED
        self.failure_info = FailureInfo(message=message, category=category)


def new_task_request(
    method: str,
    args: list | tuple = (),
    kwargs: Mapping | None = None,
    topic: str = "default",
    task_info: Mapping | None = None,
    resources: ResourceSpec | None = None,
) -> ResultRecord:
    """Build a pending record with a fresh task id and ``created`` stamped."""
    if not method:
        raise ValueError("method name must be non-empty")
    record = ResultRecord(
        task_id=str(uuid.uuid4()),
        method=method,
        topic=topic,
        args=list(args),
        kwargs=dict(kwargs or {}),
        task_info=dict(task_info or {}),
        resources=resources or ResourceSpec(),
    )
    record.mark_timestamp("created")
    return record


def mark_timestamp(record: ResultRecord, event: str) -> ResultRecord:
    return record.mark_timestamp(event)


# ---------------------------------------------------------------------------
# Value encoding.
#
# Values that may appear in args/kwargs/value: JSON scalars, lists, tuples,
# string-keyed dicts, bytes, and ProxyRef. Tagged objects use the reserved
# "__kind__" key; plain dicts that happen to contain that key are escaped.

_KIND = "__kind__"


def encode_value(value: Any) -> Any:
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, (bytes, bytearray)):
        return {_KIND: "bytes", "b64": base64.b64encode(bytes(value)).decode("ascii")}
    if isinstance(value, ProxyRef):
        return {
            _KIND: "proxy",
            "store_kind": value.store_kind,
            "locator": value.locator,
            "key": value.key,
            "size_bytes": value.size_bytes,
            "content_hash": value.content_hash,
        }
    if isinstance(value, tuple):
        return {_KIND: "tuple", "items": [encode_value(v) for v in value]}
    if isinstance(value, list):
        return [encode_value(v) for v in value]
    if isinstance(value, dict):
        if any(not isinstance(k, str) for k in value):
            raise TypeError("only string dict keys are supported in records")
        if _KIND in value:
            return {_KIND: "dict", "items": [[k, encode_value(v)] for k, v in value.items()]}
        return {k: encode_value(v) for k, v in value.items()}
    raise TypeError(f"unsupported value type in record: {type(value).__name__}")


def decode_value(obj: Any) -> Any:
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    if isinstance(obj, list):
        return [decode_value(v) for v in obj]
    if isinstance(obj, dict):
        kind = obj.get(_KIND)
        if kind is None:
            return {k: decode_value(v) for k, v in obj.items()}
        if kind == "bytes":
            return base64.b64decode(obj["b64"])
        if kind == "proxy":
            return ProxyRef(
                store_kind=obj["store_kind"],
                locator=obj["locator"],
                key=obj["key"],
                size_bytes=int(obj["size_bytes"]),
                content_hash=obj["content_hash"],
            )
        if kind == "tuple":
            return tuple(decode_value(v) for v in obj["items"])
        if kind == "dict":
            return {k: decode_value(v) for k, v in obj["items"]}
        raise DecodeError(f"unknown value tag: {kind!r}")
    raise DecodeError(f"unsupported JSON node: {type(obj).__name__}")


def encoded_size(value: Any) -> int:
    """Size used for proxy-threshold decisions.

    Byte strings count as their raw length; anything else counts as the
    length of its canonical JSON encoding.
    """
    if isinstance(value, (bytes, bytearray)):
        return len(value)
    return len(json.dumps(encode_value(value), separators=(",", ":")).encode("utf-8"))


# Payloads stored in the data fabric are self-describing: one tag byte then
# either raw bytes or the JSON encoding of the value.
_TAG_RAW = b"R"
_TAG_JSON = b"J"


def value_to_payload(value: Any) -> bytes:
    if isinstance(value, (bytes, bytearray)):
        return _TAG_RAW + bytes(value)
    encoded = json.dumps(encode_value(value), separators=(",", ":")).encode("utf-8")
    return _TAG_JSON + encoded


def payload_to_value(payload: bytes) -> Any:
    if not payload:
        raise DecodeError("empty store payload")
    tag, body = payload[:1], payload[1:]
    if tag == _TAG_RAW:
        return body
    if tag == _TAG_JSON:
        return decode_value(json.loads(body.decode("utf-8")))
    raise DecodeError(f"unknown store payload tag: {tag!r}")


# ---------------------------------------------------------------------------
# Record envelope.


def record_to_envelope(record: ResultRecord) -> dict:
    env = {
        "v": ENVELOPE_VERSION,
        "task_id": record.task_id,
        "method": record.method,
        "topic": record.topic,
        "args": [encode_value(a) for a in record.args],
        "kwargs": {k: encode_value(v) for k, v in record.kwargs.items()},
        "success": record.success.value,
        "failure_info": None
        if record.failure_info is None
        else {"message": record.failure_info.message, "category": record.failure_info.category},
        "task_info": {k: encode_value(v) for k, v in record.task_info.items()},
        "resources": {
            "node_count": record.resources.node_count,
            "cpu_processes": record.resources.cpu_processes,
            "pool": record.resources.pool,
        },
        "timestamps": {
            name: list(pair)
            for name in TIMESTAMP_FIELDS
            if (pair := record.timestamps.get(name)) is not None
        },
        "time_costs": dict(record.time_costs),
    }
    if record.value_present:
        env["value"] = encode_value(record.value)
    return env


def envelope_to_record(env: dict) -> ResultRecord:
    try:
        if env.get("v") != ENVELOPE_VERSION:
            raise DecodeError(f"unsupported envelope version: {env.get('v')!r}")
        ledger = TimestampLedger()
        for name, pair in env["timestamps"].items():
            if name not in TIMESTAMP_FIELDS:
                raise DecodeError(f"unknown timestamp field: {name!r}")
            setattr(ledger, name, (float(pair[0]), float(pair[1])))
        failure = env.get("failure_info")
        record = ResultRecord(
            task_id=env["task_id"],
            method=env["method"],
            topic=env["topic"],
            args=[decode_value(a) for a in env["args"]],
            kwargs={k: decode_value(v) for k, v in env["kwargs"].items()},
            value=decode_value(env["value"]) if "value" in env else ABSENT,
            success=TaskState(env["success"]),
            failure_info=None
            if failure is None
            else FailureInfo(message=failure["message"], category=failure["category"]),
            task_info={k: decode_value(v) for k, v in env["task_info"].items()},
            resources=ResourceSpec(**env["resources"]),
            timestamps=ledger,
            time_costs=dict(env["time_costs"]),
        )
        return record
    except DecodeError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise DecodeError(f"malformed record envelope: {exc}") from exc


def encode_record(record: ResultRecord) -> bytes:
    """Serialize a record to its canonical JSON envelope bytes."""
    return json.dumps(record_to_envelope(record), separators=(",", ":"), sort_keys=True).encode(
        "utf-8"
    )


def decode_record(data: bytes) -> ResultRecord:
    """Parse envelope bytes; raises ``DecodeError`` with a byte offset on junk."""
    try:
        env = json.loads(data.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid JSON: {exc.msg}", offset=exc.pos) from exc
    except UnicodeDecodeError as exc:
        raise DecodeError("invalid UTF-8", offset=exc.start) from exc
    if not isinstance(env, dict):
        raise DecodeError("envelope is not a JSON object")
    return envelope_to_record(env)
