"""Task execution, the state cache, the local executor, and the serve loop."""

import threading
import time

import pytest

from steerflow.queues import InProcessQueues
from steerflow.records import (
    ProxyRef,
    TaskState,
    new_task_request,
    value_to_payload,
)
from steerflow.store import FileDirStore, Resolver
from steerflow.taskserver import (
    LocalExecutor,
    MethodRegistration,
    StateCache,
    TaskServer,
    WorkerContext,
    execute_task,
)


def add(a, b):
    return a + b


def napper(duration_s):
    time.sleep(duration_s)
    return duration_s


REGISTRY = {
    "add": MethodRegistration(name="add", fn=add),
    "napper": MethodRegistration(name="napper", fn=napper),
}


# -- execute_task -----------------------------------------------------------------


def test_successful_execution_fills_the_record():
    record = new_task_request("add", args=[2], kwargs={"b": 3})
    execute_task(REGISTRY, record)
    assert record.success is TaskState.SUCCEEDED
    assert record.value == 5
    assert record.timestamps.get("compute_started") is not None
    assert record.timestamps.get("compute_ended") is not None
    assert record.time_costs["running_s"] >= 0.0


def test_unknown_method_fails_with_category():
    record = new_task_request("transmogrify")
    execute_task(REGISTRY, record)
    assert record.success is TaskState.FAILED
    assert record.failure_info.category == "method-not-found"
    assert record.timestamps.get("compute_ended") is not None


def test_raising_task_fails_with_exception_text():
    def fragile():
        raise ValueError("bad input 42")

    registry = {"fragile": MethodRegistration(name="fragile", fn=fragile)}
    record = new_task_request("fragile")
    execute_task(registry, record)
    assert record.success is TaskState.FAILED
    assert record.failure_info.category == "exception"
    assert "ValueError" in record.failure_info.message
    assert "bad input 42" in record.failure_info.message
    assert not record.value_present


def test_proxied_arguments_are_resolved_transparently(tmp_path):
    store = FileDirStore(str(tmp_path))
    ref = store.put(value_to_payload(b"\x01" * 2048))
    captured = {}

    def probe(data, tag=None):
        captured["data"] = data
        captured["tag"] = tag
        return len(data)

    registry = {"probe": MethodRegistration(name="probe", fn=probe)}
    kw_ref = store.put(value_to_payload("kw-value"))
    record = new_task_request("probe", args=[ref], kwargs={"tag": kw_ref})
    execute_task(registry, record)
    assert record.success is TaskState.SUCCEEDED
    assert record.value == 2048
    assert captured["data"] == b"\x01" * 2048
    assert captured["tag"] == "kw-value"
    # The record keeps references so the completed record stays small.
    assert isinstance(record.args[0], ProxyRef)
    assert isinstance(record.kwargs["tag"], ProxyRef)
    assert record.time_costs["proxy_resolve_s"] >= 0.0


def test_unresolvable_reference_fails_as_data_unavailable(tmp_path):
    store = FileDirStore(str(tmp_path))
    ref = store.put(value_to_payload(b"gone"))
    store.evict(ref.key)
    record = new_task_request("add", args=[ref], kwargs={"b": 1})
    execute_task(REGISTRY, record)
    assert record.success is TaskState.FAILED
    assert record.failure_info.category == "data-unavailable"


def test_pass_context_hands_over_cache_and_resolver():
    inits = []

    def counting(ctx, key):
        assert isinstance(ctx, WorkerContext)
        assert isinstance(ctx.resolver, Resolver)
        return ctx.state_cache.get_or_init(key, lambda: inits.append(key) or f"model-{key}")

    registry = {"counting": MethodRegistration(name="counting", fn=counting, pass_context=True)}
    cache = StateCache()
    for _ in range(3):
        record = new_task_request("counting", args=["alpha"])
        execute_task(registry, record, cache=cache)
        assert record.value == "model-alpha"
    assert inits == ["alpha"]


# -- state cache --------------------------------------------------------------------


def test_cache_evicts_least_recently_used():
    cache = StateCache(capacity=2)
    cache.get_or_init("a", lambda: 1)
    cache.get_or_init("b", lambda: 2)
    cache.get_or_init("a", lambda: -1)  # refresh a's recency; initializer unused
    cache.get_or_init("c", lambda: 3)  # evicts b
    assert "a" in cache and "c" in cache
    assert "b" not in cache
    assert len(cache) == 2
    assert cache.get_or_init("b", lambda: 20) == 20


def test_cache_initializes_exactly_once_under_contention():
    cache = StateCache()
    calls = []
    barrier = threading.Barrier(8)

    def initializer():
        calls.append(1)
        time.sleep(0.1)
        return "built"

    results = []

    def racer():
        barrier.wait()
        results.append(cache.get_or_init("model", initializer))

    threads = [threading.Thread(target=racer) for _ in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join(timeout=10.0)
    assert len(calls) == 1
    assert results == ["built"] * 8


def test_cache_failure_caches_nothing():
    cache = StateCache()
    attempts = []

    def flaky():
        attempts.append(1)
        if len(attempts) == 1:
            raise RuntimeError("first try fails")
        return "second try"

    with pytest.raises(RuntimeError):
        cache.get_or_init("k", flaky)
    assert "k" not in cache
    assert cache.get_or_init("k", flaky) == "second try"


def test_cache_capacity_validation():
    with pytest.raises(ValueError):
        StateCache(capacity=0)


# -- local executor ---------------------------------------------------------------------


def test_executor_completes_submissions():
    executor = LocalExecutor(slots=2)
    executor.start(REGISTRY)
    done = []
    for i in range(5):
        executor.submit(new_task_request("add", args=[i, 1]), done.append)
    assert executor.drain(timeout_s=10.0)
    executor.shutdown()
    assert sorted(r.value for r in done) == [1, 2, 3, 4, 5]


def test_executor_runs_slots_in_parallel():
    executor = LocalExecutor(slots=2)
    executor.start(REGISTRY)
    done = threading.Event()
    count = [0]

    def complete(record):
        count[0] += 1
        if count[0] == 4:
            done.set()

    start = time.monotonic()
    for _ in range(4):
        executor.submit(new_task_request("napper", args=[0.2]), complete)
    assert done.wait(timeout=10.0)
    elapsed = time.monotonic() - start
    executor.shutdown()
    assert elapsed < 0.7  # four 0.2 s naps on two slots beat serial 0.8 s


def test_executor_drain_times_out_with_work_in_flight():
    executor = LocalExecutor(slots=1)
    executor.start(REGISTRY)
    executor.submit(new_task_request("napper", args=[0.5]), lambda r: None)
    assert executor.drain(timeout_s=0.05) is False
    assert executor.drain(timeout_s=10.0) is True
    executor.shutdown()


def test_executor_rejects_submissions_after_shutdown():
    executor = LocalExecutor(slots=1)
    executor.start(REGISTRY)
    executor.shutdown()
    with pytest.raises(RuntimeError):
        executor.submit(new_task_request("add", args=[1, 1]), lambda r: None)


def test_executor_validates_slots():
    with pytest.raises(ValueError):
        LocalExecutor(slots=0)


# -- task server ----------------------------------------------------------------------------


def serve_in_thread(server, queues, executor):
    thread = threading.Thread(target=server.serve, args=(queues, executor), daemon=True)
    thread.start()
    return thread


def test_registration_rules():
    server = TaskServer()
    server.register_method(add)  # bare callable
    assert "add" in server.methods
    with pytest.raises(ValueError):
        server.register_method(MethodRegistration(name="add", fn=add))
    empty = TaskServer()
    with pytest.raises(ValueError):
        empty.serve(InProcessQueues(), LocalExecutor())


def test_serve_round_trips_tasks():
    queues = InProcessQueues()
    server = TaskServer(methods=(MethodRegistration(name="add", fn=add),))
    executor = LocalExecutor(slots=2)
    thread = serve_in_thread(server, queues, executor)
    ids = [queues.send_inputs("add", args=[i, i]) for i in range(4)]
    values = {}
    for _ in range(4):
        record = queues.get_result(timeout_s=10.0)
        values[record.task_id] = record.value
    queues.close()
    thread.join(timeout=10.0)
    assert not thread.is_alive()
    executor.shutdown()
    assert values == {task_id: 2 * i for i, task_id in enumerate(ids)}


def test_serve_returns_failed_records_for_unknown_methods():
    queues = InProcessQueues()
    server = TaskServer(methods=(MethodRegistration(name="add", fn=add),))
    executor = LocalExecutor()
    thread = serve_in_thread(server, queues, executor)
    queues.send_inputs("transmogrify")
    record = queues.get_result(timeout_s=10.0)
    assert record.success is TaskState.FAILED
    assert record.failure_info.category == "method-not-found"
    queues.close()
    thread.join(timeout=10.0)
    executor.shutdown()


def test_slow_tasks_do_not_block_later_dispatches():
    queues = InProcessQueues()
    server = TaskServer(methods=(MethodRegistration(name="napper", fn=napper),))
    executor = LocalExecutor(slots=2)
    thread = serve_in_thread(server, queues, executor)
    queues.send_inputs("napper", args=[0.5])
    queues.send_inputs("napper", args=[0.0])
    first = queues.get_result(timeout_s=10.0)
    assert first.value == 0.0  # the fast task finished while the slow one ran
    second = queues.get_result(timeout_s=10.0)
    assert second.value == 0.5
    queues.close()
    thread.join(timeout=10.0)
    executor.shutdown()
