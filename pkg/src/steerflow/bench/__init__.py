"""Benchmark applications: the task-limit latency probe and MH sampling."""

from .mh import (
    MHConfig,
    discrete_occupancy,
    metropolis_accept,
    reference_mh_oracle,
    run_mh_sampler,
)
from .reports import BenchReport, emit_report, load_report
from .runtime import EngineHarness
from .task_limit import BenchConfig, run_task_limit
from .tasks import BENCH_METHODS, log_prob_gaussian, sleep_task

__all__ = [
    "BENCH_METHODS",
    "BenchConfig",
    "BenchReport",
    "EngineHarness",
    "MHConfig",
    "discrete_occupancy",
    "emit_report",
    "load_report",
    "log_prob_gaussian",
    "metropolis_accept",
    "reference_mh_oracle",
    "run_mh_sampler",
    "run_task_limit",
    "sleep_task",
]
