"""Resource counter pools: allocation, reallocation, and concurrency."""

import threading
import time

import numpy as np
import pytest

from steerflow.thinker import ResourceCounter


def test_pools_start_full():
    counter = ResourceCounter({"a": 3, "b": 0})
    assert counter.snapshot() == {"a": (3, 3), "b": (0, 0)}
    assert counter.available("a") == 3
    assert counter.total("a") == 3


def test_pool_registration_rules():
    counter = ResourceCounter({"a": 1})
    with pytest.raises(ValueError):
        counter.add_pool("a", 2)
    with pytest.raises(ValueError):
        counter.add_pool("b", -1)
    with pytest.raises(KeyError):
        counter.available("missing")
    with pytest.raises(KeyError):
        counter.allocate("missing")


def test_allocate_and_release_move_availability():
    counter = ResourceCounter({"a": 4})
    assert counter.allocate("a", 3)
    assert counter.available("a") == 1
    counter.release("a", 2)
    assert counter.available("a") == 3
    with pytest.raises(ValueError):
        counter.release("a", 2)  # would exceed the pool total
    with pytest.raises(ValueError):
        counter.allocate("a", 0)
    with pytest.raises(ValueError):
        counter.release("a", 0)


def test_allocate_times_out_when_slots_are_held():
    counter = ResourceCounter({"a": 1})
    assert counter.allocate("a")
    start = time.monotonic()
    assert counter.allocate("a", timeout_s=0.1) is False
    assert 0.05 <= time.monotonic() - start < 2.0


def test_allocate_blocks_until_release():
    counter = ResourceCounter({"a": 1})
    assert counter.allocate("a")
    acquired = threading.Event()

    def taker():
        if counter.allocate("a", timeout_s=5.0):
            acquired.set()

    thread = threading.Thread(target=taker)
    thread.start()
    time.sleep(0.1)
    assert not acquired.is_set()
    counter.release("a")
    assert acquired.wait(timeout=5.0)
    thread.join(timeout=5.0)


def test_allocation_is_all_or_nothing():
    counter = ResourceCounter({"a": 3})
    assert counter.allocate("a", 2)
    # A request for 2 more must not take the single remaining slot.
    assert counter.allocate("a", 2, timeout_s=0.1) is False
    assert counter.available("a") == 1


def test_reallocate_moves_capacity_between_pools():
    counter = ResourceCounter({"a": 3, "b": 1})
    assert counter.reallocate("a", "b", 2)
    assert counter.snapshot() == {"a": (1, 1), "b": (3, 3)}
    assert counter.reallocate("b", "b", 99)  # same pool: nothing to move
    assert counter.snapshot()["b"] == (3, 3)


def test_reallocate_times_out_without_changing_totals():
    counter = ResourceCounter({"a": 2, "b": 0})
    assert counter.allocate("a", 2)
    assert counter.reallocate("a", "b", 1, timeout_s=0.1) is False
    assert counter.total("a") == 2
    assert counter.total("b") == 0


def test_reallocate_waits_for_busy_slots():
    counter = ResourceCounter({"a": 1, "b": 0})
    assert counter.allocate("a")
    moved = threading.Event()

    def mover():
        if counter.reallocate("a", "b", 1, timeout_s=5.0):
            moved.set()

    thread = threading.Thread(target=mover)
    thread.start()
    time.sleep(0.1)
    counter.release("a")
    assert moved.wait(timeout=5.0)
    thread.join(timeout=5.0)
    assert counter.snapshot() == {"a": (0, 0), "b": (1, 1)}


def test_concurrent_mixed_operations_preserve_invariants():
    pools = {"a": 5, "b": 7, "c": 9}
    grand_total = sum(pools.values())
    counter = ResourceCounter(pools)
    names = list(pools)
    errors = []

    def churn(seed):
        rng = np.random.default_rng(seed)
        held = {name: 0 for name in names}
        try:
            for _ in range(2000):
                op = rng.integers(3)
                pool = names[rng.integers(len(names))]
                if op == 0:
                    if counter.allocate(pool, 1, timeout_s=0.02):
                        held[pool] += 1
                elif op == 1 and held[pool] > 0:
                    counter.release(pool, 1)
                    held[pool] -= 1
                else:
                    other = names[rng.integers(len(names))]
                    counter.reallocate(pool, other, 1, timeout_s=0.02)
        except Exception as exc:  # noqa: BLE001 - surfaced after join
            errors.append(exc)
        finally:
            for name, count in held.items():
                if count:
                    counter.release(name, count)

    threads = [threading.Thread(target=churn, args=(seed,)) for seed in range(4)]
    for thread in threads:
        thread.start()
    deadline = time.monotonic() + 30.0
    while any(t.is_alive() for t in threads) and time.monotonic() < deadline:
        snapshot = counter.snapshot()
        assert sum(total for _, total in snapshot.values()) == grand_total
        assert all(0 <= avail <= total for avail, total in snapshot.values())
        time.sleep(0.01)
    for thread in threads:
        thread.join(timeout=1.0)
    assert not any(t.is_alive() for t in threads), "counter operations deadlocked"
    assert not errors
    snapshot = counter.snapshot()
    assert sum(total for _, total in snapshot.values()) == grand_total
    assert all(avail == total for avail, total in snapshot.values())
