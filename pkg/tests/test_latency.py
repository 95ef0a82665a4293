"""Latency decomposition between a completed task and its successor."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from steerflow.errors import IncompleteRecordError
from steerflow.latency import compute_latencies

from conftest import make_stamped_record


def make_pair(wall_offset=0.0):
    prev = make_stamped_record(
        {"created": 0.0, "compute_started": 0.5, "compute_ended": 10.5, "result_received": 10.6},
        wall_offset=wall_offset,
    )
    next_record = make_stamped_record(
        {"created": 10.605, "compute_started": 11.0}, wall_offset=wall_offset
    )
    return prev, next_record


def test_worked_example_decomposition():
    prev, next_record = make_pair()
    breakdown = compute_latencies(prev, next_record)
    assert breakdown.reaction_s == pytest.approx(0.1, abs=1e-9)
    assert breakdown.decision_s == pytest.approx(0.005, abs=1e-9)
    assert breakdown.dispatch_s == pytest.approx(0.395, abs=1e-9)
    assert breakdown.compute_s == pytest.approx(10.0, abs=1e-9)
    assert breakdown.round_trip_s == pytest.approx(10.6, abs=1e-9)
    assert breakdown.skew_clamped is False


def test_wall_offset_between_processes_does_not_shift_results():
    base = compute_latencies(*make_pair())
    shifted = compute_latencies(*make_pair(wall_offset=1234.5))
    assert shifted.decision_s == base.decision_s
    assert shifted.compute_s == base.compute_s
    assert shifted.reaction_s == pytest.approx(base.reaction_s, abs=1e-9)
    assert shifted.dispatch_s == pytest.approx(base.dispatch_s, abs=1e-9)


def test_negative_reaction_from_clock_skew_clamps_to_zero():
    prev, next_record = make_pair()
    # Compute host's wall clock runs 0.3 s ahead of the agent host's.
    mono = prev.timestamps.compute_ended[1]
    prev.timestamps.compute_ended = (mono + 0.3, mono)
    breakdown = compute_latencies(prev, next_record)
    assert breakdown.reaction_s == 0.0
    assert breakdown.skew_clamped is True
    assert breakdown.decision_s == pytest.approx(0.005, abs=1e-9)


def test_negative_dispatch_from_clock_skew_clamps_to_zero():
    prev, next_record = make_pair()
    mono = next_record.timestamps.created[1]
    next_record.timestamps.created = (mono + 2.0, mono)
    breakdown = compute_latencies(prev, next_record)
    assert breakdown.dispatch_s == 0.0
    assert breakdown.skew_clamped is True


def test_missing_timestamps_raise_with_field_names():
    prev, next_record = make_pair()
    prev.timestamps.result_received = None
    with pytest.raises(IncompleteRecordError, match="previous.*result_received"):
        compute_latencies(prev, next_record)
    prev, next_record = make_pair()
    next_record.timestamps.compute_started = None
    with pytest.raises(IncompleteRecordError, match="next.*compute_started"):
        compute_latencies(prev, next_record)


@given(
    stamps=st.lists(
        st.floats(min_value=0.0, max_value=1e4, allow_nan=False), min_size=6, max_size=6
    ).map(sorted),
    wall_offset=st.floats(min_value=0.0, max_value=1e4, allow_nan=False),
)
def test_components_sum_to_the_inter_compute_gap(stamps, wall_offset):
    """reaction + decision + dispatch spans compute_ended -> next compute_started."""
    m0, m1, m2, m3, m4, m5 = stamps
    prev = make_stamped_record(
        {"created": m0, "compute_started": m1, "compute_ended": m2, "result_received": m3},
        wall_offset=wall_offset,
    )
    next_record = make_stamped_record(
        {"created": m4, "compute_started": m5}, wall_offset=wall_offset
    )
    breakdown = compute_latencies(prev, next_record)
    gap = m5 - m2
    total = breakdown.reaction_s + breakdown.decision_s + breakdown.dispatch_s
    assert total == pytest.approx(gap, abs=1e-9)
    assert breakdown.skew_clamped is False
