"""Latency decomposition across a completed task and its successor.

Steering overhead between two consecutive tasks splits into three gaps:

* reaction: the finished result travelling back from compute to the agent,
* decision: the agent turning that result into the next request,
* dispatch: the new request travelling out and starting to compute.

Gaps measured within one process use the monotonic clock. Gaps that span
processes must use wall clocks; clock skew between hosts can drive those
slightly negative, in which case the value clamps to zero and the
breakdown is flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import IncompleteRecordError
from .records import ResultRecord

_WALL = 0
_MONO = 1

_PREV_REQUIRED = ("created", "compute_started", "compute_ended", "result_received")
_NEXT_REQUIRED = ("created", "compute_started")


@dataclass(frozen=True)
class LatencyBreakdown:
    reaction_s: float
    decision_s: float
    dispatch_s: float
    compute_s: float
    round_trip_s: float
    skew_clamped: bool = False


def _require(record: ResultRecord, names: tuple[str, ...], label: str) -> dict:
    stamps = {}
    missing = []
    for name in names:
        pair = record.timestamps.get(name)
        if pair is None:
            missing.append(name)
        else:
            stamps[name] = pair
    if missing:
        raise IncompleteRecordError(
            f"{label} record {record.task_id} missing timestamps: {', '.join(missing)}"
        )
    return stamps


def compute_latencies(prev: ResultRecord, next: ResultRecord) -> LatencyBreakdown:
    """Decompose the gap between ``prev`` finishing and ``next`` computing.

    ``prev`` must carry created, compute_started, compute_ended and
    result_received; ``next`` must carry created and compute_started.
    """
    p = _require(prev, _PREV_REQUIRED, "previous")
    n = _require(next, _NEXT_REQUIRED, "next")

    clamped = False

    # Cross-process: compute node -> agent process.
    reaction = p["result_received"][_WALL] - p["compute_ended"][_WALL]
    if reaction < 0.0:
        reaction = 0.0
        clamped = True

    # Same process (the agent), monotonic is authoritative.
    decision = n["created"][_MONO] - p["result_received"][_MONO]

    # Cross-process: agent process -> compute node.
    dispatch = n["compute_started"][_WALL] - n["created"][_WALL]
    if dispatch < 0.0:
        dispatch = 0.0
        clamped = True

    # Both stamped on the compute side, same process.
    compute = p["compute_ended"][_MONO] - p["compute_started"][_MONO]

    # Both stamped in the agent process.
    round_trip = p["result_received"][_MONO] - p["created"][_MONO]

    return LatencyBreakdown(
        reaction_s=reaction,
        decision_s=decision,
        dispatch_s=dispatch,
        compute_s=compute,
        round_trip_s=round_trip,
        skew_clamped=clamped,
    )
