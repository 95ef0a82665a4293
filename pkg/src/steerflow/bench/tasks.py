"""Task functions used by the benchmark applications."""

from __future__ import annotations

import math
import time

import numpy as np

from ..taskserver import MethodRegistration

_LN_2PI = math.log(2.0 * math.pi)


def sleep_task(
    data: bytes,
    mean_s: float = 10.0,
    std_s: float = 1.0,
    output_bytes: int = 10_000_000,
    seed=None,
) -> bytes:
    """Sleep for a normally distributed duration, then return random bytes.

    The input bytes are read (which forces proxy resolution upstream) but
    otherwise unused. Negative duration draws truncate to zero. The same
    seed always yields the same duration and output.
    """
    if mean_s < 0 or std_s < 0:
        raise ValueError("mean_s and std_s must be >= 0")
    len(data)
    rng = np.random.default_rng(seed)
    duration = max(0.0, float(rng.normal(mean_s, std_s)))
    if duration > 0.0:
        time.sleep(duration)
    return rng.bytes(output_bytes)


def log_prob_gaussian(x) -> float:
    """Exact log density of the standard normal: -0.5 * (||x||^2 + d*ln(2*pi))."""
    vec = np.asarray(x, dtype=float).reshape(-1)
    return float(-0.5 * (vec @ vec + vec.size * _LN_2PI))


BENCH_METHODS = {
    "sleep_task": MethodRegistration(name="sleep_task", fn=sleep_task),
    "compute_logp": MethodRegistration(name="compute_logp", fn=log_prob_gaussian),
}
