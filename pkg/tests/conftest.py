"""Shared helpers for the test suite."""

from __future__ import annotations

import socket

import pytest

from steerflow.records import ResultRecord


def make_stamped_record(events: dict, wall_offset: float = 0.0, **fields) -> ResultRecord:
    """Record with synthetic timestamps.

    ``events`` maps ledger field names to monotonic seconds; the wall half
    of each pair is the monotonic value plus ``wall_offset``, mimicking the
    per-process clock anchoring.
    """
    record = ResultRecord(task_id=fields.pop("task_id", "t-0"), method=fields.pop("method", "m"), **fields)
    for name, mono in events.items():
        setattr(record.timestamps, name, (mono + wall_offset, mono))
    return record


def free_tcp_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture
def socket_pair():
    left, right = socket.socketpair()
    yield left, right
    left.close()
    right.close()
