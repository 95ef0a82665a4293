"""Pass-by-reference data fabric: object stores, proxy policy, resolution.

Large values leave the control-message path: their payload bytes go into a
store (an in-memory TCP server or a shared directory) and a small
``ProxyRef`` travels through the queues instead. Workers resolve refs back
to values just before task execution; a per-process cache makes repeated
resolution free.
"""

from __future__ import annotations

import hashlib
import json
import os
import socket
import tempfile
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

from .errors import (
    CorruptionError,
    MissingKeyError,
    StoreFullError,
    StoreUnreachableError,
)
from .framing import read_frame, recv_exact, set_nodelay, write_frame
from .records import ProxyRef, ResultRecord, encoded_size, value_to_payload

MEMORY_TCP = "memory_tcp"
FILE_DIR = "file_dir"

DEFAULT_THRESHOLD_BYTES = 100_000


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class StoreMetrics:
    """Counters for one store handle (or one store server)."""

    puts: int = 0
    gets: int = 0
    cache_hits: int = 0
    evictions: int = 0
    bytes_in: int = 0
    bytes_out: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def count(self, **deltas: int) -> None:
        with self._lock:
            for name, delta in deltas.items():
                setattr(self, name, getattr(self, name) + delta)

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "puts": self.puts,
                "gets": self.gets,
                "cache_hits": self.cache_hits,
                "evictions": self.evictions,
                "bytes_in": self.bytes_in,
                "bytes_out": self.bytes_out,
            }


class FileDirStore:
    """One file per key in a shared directory.

    Layout: ``<dir>/<key>.bin`` holds the payload, ``<dir>/<key>.meta`` holds
    JSON ``{"size": N, "hash": hex}``. Data is written to a temp file and
    renamed into place; the meta file lands last, so a key whose meta file
    exists is always fully readable.
    """

    store_kind = FILE_DIR

    def __init__(self, directory: str):
        self.directory = str(directory)
        self.metrics = StoreMetrics()
        try:
            os.makedirs(self.directory, exist_ok=True)
        except OSError as exc:
            raise StoreUnreachableError(f"cannot create store directory: {exc}") from exc

    @property
    def locator(self) -> str:
        return self.directory

    def _paths(self, key: str) -> tuple[str, str]:
        return (
            os.path.join(self.directory, f"{key}.bin"),
            os.path.join(self.directory, f"{key}.meta"),
        )

    def put(self, data: bytes) -> ProxyRef:
        key = uuid.uuid4().hex
        bin_path, meta_path = self._paths(key)
        digest = _sha256(data)
        try:
            self._write_atomic(bin_path, data)
            meta = json.dumps({"size": len(data), "hash": digest}).encode("utf-8")
            self._write_atomic(meta_path, meta)
        except OSError as exc:
            raise StoreUnreachableError(f"store directory not writable: {exc}") from exc
        self.metrics.count(puts=1, bytes_in=len(data))
        return ProxyRef(
            store_kind=FILE_DIR,
            locator=self.directory,
            key=key,
            size_bytes=len(data),
            content_hash=digest,
        )

    def _write_atomic(self, path: str, data: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(tmp, path)
        except OSError:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    def get(self, key: str) -> bytes:
        bin_path, meta_path = self._paths(key)
        try:
            # Meta presence is the commit point for a put.
            with open(meta_path, "rb"):
                pass
            with open(bin_path, "rb") as handle:
                data = handle.read()
        except FileNotFoundError:
            raise MissingKeyError(key) from None
        except OSError as exc:
            raise StoreUnreachableError(f"store directory not readable: {exc}") from exc
        self.metrics.count(gets=1, bytes_out=len(data))
        return data

    def exists(self, key: str) -> bool:
        _, meta_path = self._paths(key)
        return os.path.exists(meta_path)

    def evict(self, key: str) -> None:
        bin_path, meta_path = self._paths(key)
        removed = False
        # Meta goes first so a concurrent get sees a consistent miss.
        for path in (meta_path, bin_path):
            try:
                os.unlink(path)
                removed = True
            except FileNotFoundError:
                pass
        if removed:
            self.metrics.count(evictions=1)

    def close(self) -> None:
        pass


class MemoryStoreClient:
    """Client handle for the in-memory TCP store server.

    Each call opens its own connection, which keeps concurrent callers
    independent; the payloads are local-socket transfers where setup cost
    is negligible.
    """

    store_kind = MEMORY_TCP

    def __init__(self, locator: str, max_frame: int = 64 * 1024 * 1024):
        self.locator = locator
        self.max_frame = max_frame
        host, _, port = locator.rpartition(":")
        try:
            self._address = (host, int(port))
        except ValueError as exc:
            raise StoreUnreachableError(f"bad store locator {locator!r}") from exc
        self.metrics = StoreMetrics()

    def _request(self, header: dict, body: bytes = b"") -> tuple[dict, bytes]:
        try:
            with socket.create_connection(self._address, timeout=30.0) as sock:
                set_nodelay(sock)
                write_frame(sock, json.dumps(header).encode("utf-8"), self.max_frame)
                if body:
                    sock.sendall(body)
                reply = json.loads(read_frame(sock, self.max_frame).decode("utf-8"))
                payload = b""
                length = int(reply.get("len", 0))
                if length:
                    payload = recv_exact(sock, length)
                return reply, payload
        except StoreUnreachableError:
            raise
        except OSError as exc:
            raise StoreUnreachableError(f"store at {self.locator} unreachable: {exc}") from exc

    def _check(self, reply: dict, key: str) -> None:
        if reply.get("ok"):
            return
        code = reply.get("code")
        message = reply.get("error", "store error")
        if code == "full":
            raise StoreFullError(message)
        if code == "missing":
            raise MissingKeyError(key)
        raise StoreUnreachableError(message)

    def put(self, data: bytes) -> ProxyRef:
        key = uuid.uuid4().hex
        reply, _ = self._request({"op": "put", "key": key, "len": len(data)}, body=data)
        self._check(reply, key)
        self.metrics.count(puts=1, bytes_in=len(data))
        return ProxyRef(
            store_kind=MEMORY_TCP,
            locator=self.locator,
            key=key,
            size_bytes=len(data),
            content_hash=_sha256(data),
        )

    def get(self, key: str) -> bytes:
        reply, payload = self._request({"op": "get", "key": key})
        self._check(reply, key)
        self.metrics.count(gets=1, bytes_out=len(payload))
        return payload

    def exists(self, key: str) -> bool:
        reply, _ = self._request({"op": "exists", "key": key})
        self._check(reply, key)
        return bool(reply["exists"])

    def evict(self, key: str) -> None:
        reply, _ = self._request({"op": "evict", "key": key})
        self._check(reply, key)
        self.metrics.count(evictions=1)

    def stats(self) -> dict:
        reply, _ = self._request({"op": "stats"})
        self._check(reply, "")
        return reply["stats"]

    def close(self) -> None:
        pass


def open_store(store_kind: str, locator: str):
    if store_kind == FILE_DIR:
        return FileDirStore(locator)
    if store_kind == MEMORY_TCP:
        return MemoryStoreClient(locator)
    raise ValueError(f"unknown store kind: {store_kind!r}")


class Resolver:
    """Resolves ProxyRefs to payload bytes with a per-process LRU cache.

    Keys are write-once, so a cached payload can never go stale; eviction
    at the store does not invalidate local copies.
    """

    def __init__(self, max_entries: int = 128):
        self.max_entries = max_entries
        self.metrics = StoreMetrics()
        self._cache: OrderedDict[tuple[str, str], bytes] = OrderedDict()
        self._handles: dict[tuple[str, str], object] = {}
        self._lock = threading.Lock()

    def store_for(self, ref: ProxyRef):
        with self._lock:
            handle = self._handles.get((ref.store_kind, ref.locator))
            if handle is None:
                handle = open_store(ref.store_kind, ref.locator)
                self._handles[(ref.store_kind, ref.locator)] = handle
            return handle

    def resolve(self, ref: ProxyRef) -> bytes:
        cache_key = (ref.locator, ref.key)
        with self._lock:
            data = self._cache.get(cache_key)
            if data is not None:
                self._cache.move_to_end(cache_key)
                self.metrics.count(gets=1, cache_hits=1)
                return data
        data = self.store_for(ref).get(ref.key)
        if _sha256(data) != ref.content_hash:
            raise CorruptionError(
                f"stored bytes for key {ref.key} do not match the reference hash"
            )
        with self._lock:
            self._cache[cache_key] = data
            self._cache.move_to_end(cache_key)
            while len(self._cache) > self.max_entries:
                self._cache.popitem(last=False)
            self.metrics.count(gets=1, bytes_in=len(data))
        return data


@dataclass
class ThresholdPolicy:
    """Replace values above a size threshold with store references.

    The rule is "larger than the chosen size": the comparison is strictly
    greater-than, so a value measuring exactly the threshold stays inline.
    Values that are already ProxyRefs pass through untouched.
    """

    store: object
    threshold_bytes: int = DEFAULT_THRESHOLD_BYTES
    applies_to: str = "both"  # "args" | "results" | "both"

    def __post_init__(self):
        if self.threshold_bytes < 1:
            raise ValueError("threshold_bytes must be >= 1")
        if self.applies_to not in ("args", "results", "both"):
            raise ValueError(f"bad applies_to: {self.applies_to!r}")

    def covers(self, stage: str) -> bool:
        if stage == "inputs":
            return self.applies_to in ("args", "both")
        if stage == "result":
            return self.applies_to in ("results", "both")
        raise ValueError(f"unknown policy stage: {stage!r}")

    def _maybe_proxy(self, value):
        if isinstance(value, ProxyRef):
            return value
        if encoded_size(value) > self.threshold_bytes:
            return self.store.put(value_to_payload(value))
        return value

    def apply(self, record: ResultRecord, stage: str) -> ResultRecord:
        if not self.covers(stage):
            return record
        if stage == "inputs":
            record.args = [self._maybe_proxy(v) for v in record.args]
            record.kwargs = {k: self._maybe_proxy(v) for k, v in record.kwargs.items()}
        elif record.value_present:
            record.value = self._maybe_proxy(record.value)
        return record


def apply_policy(policy: ThresholdPolicy, record: ResultRecord, stage: str) -> ResultRecord:
    return policy.apply(record, stage)
