"""Two-clock timestamp capture.

Every timestamp is a ``(wall, monotonic)`` pair. The wall value is derived
from a per-process anchor plus the monotonic clock, so within one process
wall intervals agree with monotonic intervals exactly (no jitter between
two separate clock reads, and no NTP steps mid-run). Across processes the
anchors are independent ``time.time()`` readings, so wall values remain
comparable between machines to ordinary clock-sync accuracy.
"""

import time

_WALL_ANCHOR = time.time()
_MONO_ANCHOR = time.perf_counter()


def now() -> tuple[float, float]:
    """Capture the current instant as a (wall, monotonic) pair."""
    mono = time.perf_counter()
    return _WALL_ANCHOR + (mono - _MONO_ANCHOR), mono


def wall_now() -> float:
    return now()[0]


def mono_now() -> float:
    return time.perf_counter()
