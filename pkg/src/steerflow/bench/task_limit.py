"""The task-limit latency benchmark.

A startup agent submits ``workers`` sleep tasks; a result processor answers
every completion by submitting one replacement until ``total_tasks``
submissions have been made, so the number of in-flight tasks stays constant
through the steady state. Each completion is paired with the task submitted
in response to it, and the reaction/decision/dispatch decomposition is
computed per pair after the drain.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import BenchAbortedError
from ..latency import compute_latencies
from ..records import TaskState, encode_record
from ..thinker import AgentSpec, Thinker
from .reports import BenchReport, aggregate_rows, row_from_breakdown
from .runtime import EngineHarness


@dataclass
class BenchConfig:
    workers: int
    total_tasks: int
    mean_sleep_s: float = 10.0
    std_sleep_s: float = 1.0
    payload_bytes: int = 10_000_000
    queue: str = "inproc"  # "inproc" | "tcp"
    proxy_threshold_bytes: int | None = None  # None = proxying off
    seed: int = 42
    executor: str = "local"  # "local" | "remote"
    listen: str | None = None  # remote executor endpoint
    expect_workers: int = 0
    heartbeat_s: float = 5.0

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.total_tasks < self.workers:
            raise ValueError("total_tasks must be >= workers")

    def to_dict(self) -> dict:
        return asdict(self)


class _TaskLimitState:
    """Mutable run state; every touch happens under the thinker context lock."""

    def __init__(self, config: BenchConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.payload = rng.bytes(config.payload_bytes)
        self.submitted = 0
        self.completed = 0
        self.in_flight = 0
        self.trace: list[list] = []
        self.pairs: list[tuple[str, str]] = []
        self.records: dict = {}
        self.failure: dict | None = None

    def submit_next(self, ctx) -> str:
        index = self.submitted
        cfg = self.config
        task_id = ctx.queues.send_inputs(
            "sleep_task",
            args=[self.payload],
            kwargs={
                "mean_s": cfg.mean_sleep_s,
                "std_s": cfg.std_sleep_s,
                "output_bytes": cfg.payload_bytes,
                "seed": [cfg.seed, index],
            },
            task_info={"index": index},
        )
        self.submitted += 1
        return task_id


def _startup_body(ctx) -> None:
    state: _TaskLimitState = ctx.state["bench"]
    for _ in range(state.config.workers):
        state.submit_next(ctx)
        state.in_flight += 1
        state.trace.append(["dispatch", state.in_flight])


def _processor_body(ctx, record) -> None:
    state: _TaskLimitState = ctx.state["bench"]
    if record.success is TaskState.FAILED:
        info = record.failure_info
        state.failure = {
            "task_id": record.task_id,
            "failure_category": info.category if info else "unknown",
            "failure_message": info.message if info else "",
        }
        ctx.set_done()
        return
    if ctx.is_done:
        return
    state.completed += 1
    state.records[record.task_id] = record
    if state.submitted < state.config.total_tasks:
        # Completion and replacement count as one net-zero trace event, so
        # the in-flight level is constant at every observable instant.
        next_id = state.submit_next(ctx)
        state.pairs.append((record.task_id, next_id))
        state.trace.append(["swap", state.in_flight])
    else:
        state.in_flight -= 1
        state.trace.append(["drain", state.in_flight])
    if state.completed >= state.config.total_tasks:
        ctx.set_done()


def _build_report(state: _TaskLimitState, executor_stats: dict) -> BenchReport:
    rows = []
    for prev_id, next_id in state.pairs:
        prev = state.records[prev_id]
        next_record = state.records[next_id]
        breakdown = compute_latencies(prev, next_record)
        gap_s = (
            next_record.timestamps.get("compute_started")[0]
            - prev.timestamps.get("compute_ended")[0]
        )
        rows.append(row_from_breakdown(breakdown, gap_s))

    records = state.records.values()
    first_created = min(record.timestamps.get("created")[1] for record in records)
    last_received = max(record.timestamps.get("result_received")[1] for record in records)
    span = last_received - first_created
    rate = state.completed / span if span > 0 else float("inf")
    max_bytes = max(len(encode_record(record)) for record in records)

    return BenchReport(
        config=state.config.to_dict(),
        rows=rows,
        aggregates=aggregate_rows(rows),
        task_rate_per_s=rate,
        trace=state.trace,
        max_record_bytes=max_bytes,
        executor_stats=dict(executor_stats),
    )


def run_task_limit(config: BenchConfig, harness: EngineHarness | None = None) -> BenchReport:
    """Run the benchmark to completion and assemble its report.

    A failed task aborts the run with ``BenchAbortedError`` carrying the
    failure category and message.
    """
    own_harness = harness is None
    if own_harness:
        harness = EngineHarness(
            queue_kind=config.queue,
            slots=config.workers,
            proxy_threshold_bytes=config.proxy_threshold_bytes,
            executor_kind=config.executor,
            listen=config.listen,
            expect_workers=config.expect_workers,
            heartbeat_s=config.heartbeat_s,
        ).start()
    state = _TaskLimitState(config)
    try:
        thinker = Thinker(harness.queues, state={"bench": state})
        thinker.register_agent(
            AgentSpec(name="primer", kind="startup", body=_startup_body)
        )
        thinker.register_agent(
            AgentSpec(
                name="replacer",
                kind="result_processor",
                body=_processor_body,
                binding="default",
            )
        )
        thinker.run()
        executor_stats = getattr(harness.executor, "stats", {})
        if state.failure is not None:
            raise BenchAbortedError(
                f"task {state.failure['task_id']} failed "
                f"({state.failure['failure_category']}): "
                f"{state.failure['failure_message']}",
                diagnostic={**state.failure, "executor_stats": dict(executor_stats)},
            )
        return _build_report(state, executor_stats)
    finally:
        if own_harness:
            harness.close()
