"""Data fabric: object stores, the resolver cache, and the threshold policy."""

import json
import os

import pytest

from steerflow.errors import (
    CorruptionError,
    MissingKeyError,
    StoreFullError,
    StoreUnreachableError,
)
from steerflow.records import (
    ProxyRef,
    encode_value,
    new_task_request,
    payload_to_value,
    value_to_payload,
)
from steerflow.store import (
    FileDirStore,
    MemoryStoreClient,
    Resolver,
    ThresholdPolicy,
    apply_policy,
    open_store,
)
from steerflow.store_server import MemoryTcpStoreServer

from conftest import free_tcp_port


@pytest.fixture
def file_store(tmp_path):
    return FileDirStore(str(tmp_path / "fabric"))


@pytest.fixture
def memory_server():
    with MemoryTcpStoreServer() as server:
        yield server


@pytest.fixture
def memory_store(memory_server):
    return MemoryStoreClient(memory_server.locator)


@pytest.fixture(params=["file_dir", "memory_tcp"])
def store(request, file_store, memory_store):
    return file_store if request.param == "file_dir" else memory_store


# -- store contract (both backends) --------------------------------------------


def test_put_get_round_trip(store):
    data = b"\x00\x01payload" * 100
    ref = store.put(data)
    assert ref.store_kind == store.store_kind
    assert ref.locator == store.locator
    assert ref.size_bytes == len(data)
    assert store.get(ref.key) == data


def test_reference_hash_matches_content(store):
    import hashlib

    data = b"hash me"
    ref = store.put(data)
    assert ref.content_hash == hashlib.sha256(data).hexdigest()


def test_empty_payload_round_trips(store):
    ref = store.put(b"")
    assert ref.size_bytes == 0
    assert store.get(ref.key) == b""


def test_exists_and_evict(store):
    ref = store.put(b"short-lived")
    assert store.exists(ref.key)
    store.evict(ref.key)
    assert not store.exists(ref.key)
    with pytest.raises(MissingKeyError):
        store.get(ref.key)
    store.evict(ref.key)  # idempotent


def test_missing_key_raises(store):
    with pytest.raises(MissingKeyError):
        store.get("no-such-key")


def test_each_put_gets_a_fresh_key(store):
    refs = [store.put(b"same bytes") for _ in range(3)]
    assert len({ref.key for ref in refs}) == 3


def test_metrics_track_traffic(store):
    before = store.metrics.snapshot()
    ref = store.put(b"x" * 10)
    store.get(ref.key)
    after = store.metrics.snapshot()
    assert after["puts"] == before["puts"] + 1
    assert after["gets"] == before["gets"] + 1
    assert after["bytes_in"] == before["bytes_in"] + 10
    assert after["bytes_out"] == before["bytes_out"] + 10


def test_encoded_reference_stays_under_a_kilobyte(store):
    ref = store.put(b"z" * 500_000)
    assert len(json.dumps(encode_value(ref)).encode()) <= 1024


# -- file store specifics ------------------------------------------------------------


def test_file_store_layout_and_reopen(file_store):
    ref = file_store.put(b"persisted")
    assert os.path.exists(os.path.join(file_store.directory, f"{ref.key}.bin"))
    meta_path = os.path.join(file_store.directory, f"{ref.key}.meta")
    with open(meta_path, "r", encoding="utf-8") as handle:
        meta = json.load(handle)
    assert meta == {"size": 9, "hash": ref.content_hash}
    reopened = FileDirStore(file_store.directory)
    assert reopened.get(ref.key) == b"persisted"


def test_file_store_key_without_meta_reads_as_missing(file_store):
    ref = file_store.put(b"half-written")
    os.unlink(os.path.join(file_store.directory, f"{ref.key}.meta"))
    assert not file_store.exists(ref.key)
    with pytest.raises(MissingKeyError):
        file_store.get(ref.key)


# -- memory store specifics -------------------------------------------------------------


def test_memory_store_capacity_cap():
    with MemoryTcpStoreServer(capacity_bytes=100) as server:
        client = MemoryStoreClient(server.locator)
        ref = client.put(b"a" * 80)
        with pytest.raises(StoreFullError):
            client.put(b"b" * 80)
        # The refusing connection drained its body; the server stays usable.
        assert client.get(ref.key) == b"a" * 80
        client.evict(ref.key)
        client.put(b"b" * 80)


def test_memory_store_stats_report_keys_and_bytes(memory_store):
    ref = memory_store.put(b"x" * 32)
    stats = memory_store.stats()
    assert stats["keys"] == 1
    assert stats["held_bytes"] == 32
    memory_store.evict(ref.key)
    assert memory_store.stats()["keys"] == 0


def test_unreachable_store_raises():
    client = MemoryStoreClient(f"127.0.0.1:{free_tcp_port()}")
    with pytest.raises(StoreUnreachableError):
        client.put(b"nobody listening")
    with pytest.raises(StoreUnreachableError):
        MemoryStoreClient("not-an-endpoint")


def test_open_store_dispatches_on_kind(tmp_path, memory_server):
    assert isinstance(open_store("file_dir", str(tmp_path)), FileDirStore)
    assert isinstance(open_store("memory_tcp", memory_server.locator), MemoryStoreClient)
    with pytest.raises(ValueError):
        open_store("carrier_pigeon", "x")


# -- resolver ------------------------------------------------------------------------------


def test_resolver_fetches_verifies_and_caches(file_store):
    ref = file_store.put(b"cached bytes")
    resolver = Resolver()
    assert resolver.resolve(ref) == b"cached bytes"
    store_gets = file_store.metrics.snapshot()["gets"]
    assert resolver.resolve(ref) == b"cached bytes"
    # Second resolve is a cache hit: no extra store read.
    assert file_store.metrics.snapshot()["gets"] == store_gets
    assert resolver.metrics.snapshot()["cache_hits"] == 1


def test_resolver_survives_store_eviction_once_cached(file_store):
    ref = file_store.put(b"going away")
    resolver = Resolver()
    resolver.resolve(ref)
    file_store.evict(ref.key)
    assert resolver.resolve(ref) == b"going away"


def test_resolver_detects_corrupted_bytes(file_store):
    ref = file_store.put(b"original")
    with open(os.path.join(file_store.directory, f"{ref.key}.bin"), "wb") as handle:
        handle.write(b"tampered")
    with pytest.raises(CorruptionError):
        Resolver().resolve(ref)


def test_resolver_cache_is_bounded(file_store):
    resolver = Resolver(max_entries=2)
    refs = [file_store.put(f"value-{i}".encode()) for i in range(3)]
    for ref in refs:
        resolver.resolve(ref)

    def fetches():
        counts = resolver.metrics.snapshot()
        return counts["gets"] - counts["cache_hits"]

    assert fetches() == 3
    assert resolver.resolve(refs[0]) == b"value-0"  # evicted by the two later entries
    assert fetches() == 4
    assert resolver.resolve(refs[2]) == b"value-2"  # still cached
    assert fetches() == 4
    assert resolver.metrics.snapshot()["cache_hits"] == 1


def test_resolver_missing_key_propagates(file_store):
    ref = file_store.put(b"x")
    file_store.evict(ref.key)
    with pytest.raises(MissingKeyError):
        Resolver().resolve(ref)


# -- threshold policy ----------------------------------------------------------------------


def test_policy_proxies_only_above_the_threshold(file_store):
    policy = ThresholdPolicy(store=file_store, threshold_bytes=10)
    record = new_task_request(
        "m",
        args=[b"x" * 11, b"y" * 10, "small"],
        kwargs={"big": b"z" * 100},
    )
    policy.apply(record, stage="inputs")
    assert isinstance(record.args[0], ProxyRef)
    assert record.args[1] == b"y" * 10  # exactly the threshold stays inline
    assert record.args[2] == "small"
    assert isinstance(record.kwargs["big"], ProxyRef)
    assert payload_to_value(file_store.get(record.args[0].key)) == b"x" * 11


def test_policy_proxies_large_results(file_store):
    policy = ThresholdPolicy(store=file_store, threshold_bytes=10)
    record = new_task_request("m")
    record.set_success(list(range(100)))
    policy.apply(record, stage="result")
    ref = record.value
    assert isinstance(ref, ProxyRef)
    assert payload_to_value(file_store.get(ref.key)) == list(range(100))


def test_policy_leaves_existing_references_alone(file_store):
    policy = ThresholdPolicy(store=file_store, threshold_bytes=10)
    ref = file_store.put(value_to_payload(b"x" * 50))
    record = new_task_request("m", args=[ref])
    policy.apply(record, stage="inputs")
    assert record.args[0] is ref


def test_policy_stage_scoping(file_store):
    policy = ThresholdPolicy(store=file_store, threshold_bytes=10, applies_to="args")
    assert policy.covers("inputs")
    assert not policy.covers("result")
    record = new_task_request("m")
    record.set_success(b"x" * 100)
    apply_policy(policy, record, "result")
    assert record.value == b"x" * 100
    with pytest.raises(ValueError):
        policy.covers("sideways")


def test_policy_validation(file_store):
    with pytest.raises(ValueError):
        ThresholdPolicy(store=file_store, threshold_bytes=0)
    with pytest.raises(ValueError):
        ThresholdPolicy(store=file_store, applies_to="everything")


def test_policy_ignores_absent_values(file_store):
    policy = ThresholdPolicy(store=file_store, threshold_bytes=10)
    record = new_task_request("m")  # pending, no value
    policy.apply(record, stage="result")
    assert not record.value_present
