"""Ensemble Metropolis-Hastings sampling driven by the steering engine.

One walker per ensemble member: a startup agent submits a log-density
evaluation for each walker's initial position, and a result processor
applies the Metropolis accept/reject rule, records a sample, and resubmits
a perturbed position until enough samples are collected.

``reference_mh_oracle`` produces the same schedule single-threaded with no
engine involved: with one execution slot the engine completes tasks in
submission order, so both implementations see identical per-walker
sequences of proposals and acceptance draws.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import BenchAbortedError
from ..records import TaskState
from ..thinker import AgentSpec, Thinker
from .runtime import EngineHarness
from .tasks import log_prob_gaussian

TARGETS = {"gaussian": log_prob_gaussian}


@dataclass
class MHConfig:
    walkers: int = 8
    dim: int = 8
    num_samples: int = 256
    step_width: float = 1.0
    target: str = "gaussian"
    seed: int = 1

    def __post_init__(self):
        if min(self.walkers, self.dim, self.num_samples) < 1:
            raise ValueError("walkers, dim, and num_samples must be >= 1")
        if self.step_width < 0:
            raise ValueError("step_width must be >= 0")
        if self.target not in TARGETS:
            raise ValueError(f"unknown target: {self.target!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def metropolis_accept(rng, old_lp: float, new_lp: float) -> bool:
    """Standard Metropolis rule for a symmetric proposal.

    The uniform draw is consumed only when the new point is downhill, so
    callers replaying a chain see identical generator usage.
    """
    if new_lp >= old_lp:
        return True
    return float(rng.uniform()) < math.exp(new_lp - old_lp)


class _WalkerState:
    def __init__(self, config: MHConfig):
        self.config = config
        self.rngs = [np.random.default_rng([config.seed, w]) for w in range(config.walkers)]
        self.x: list = [None] * config.walkers
        self.log_p = [-math.inf] * config.walkers
        self.samples: list[np.ndarray] = []
        self.failure: dict | None = None


def _submit(ctx, position: np.ndarray, walker: int) -> None:
    ctx.queues.send_inputs(
        "compute_logp", args=[position.tolist()], task_info={"w": walker}
    )


def _startup_body(ctx) -> None:
    state: _WalkerState = ctx.state["mh"]
    cfg = state.config
    for walker in range(cfg.walkers):
        position = state.rngs[walker].uniform(-1.0, 1.0, cfg.dim)
        state.x[walker] = position
        _submit(ctx, position, walker)


def _step_body(ctx, record) -> None:
    state: _WalkerState = ctx.state["mh"]
    cfg = state.config
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
    walker = record.task_info["w"]
    proposed = np.asarray(record.args[0], dtype=float)
    new_lp = float(record.value)
    if metropolis_accept(state.rngs[walker], state.log_p[walker], new_lp):
        state.x[walker] = proposed
        state.log_p[walker] = new_lp
    state.samples.append(state.x[walker].copy())
    if len(state.samples) >= cfg.num_samples:
        ctx.set_done()
        return
    next_position = state.x[walker] + state.rngs[walker].uniform(
        -cfg.step_width, cfg.step_width, cfg.dim
    )
    _submit(ctx, next_position, walker)


def run_mh_sampler(config: MHConfig, harness: EngineHarness | None = None) -> list[np.ndarray]:
    """Run the engine-driven sampler and return the collected samples.

    The default harness executes with a single slot, making the sample
    sequence deterministic for a given seed.
    """
    own_harness = harness is None
    if own_harness:
        harness = EngineHarness(queue_kind="inproc", slots=1).start()
    state = _WalkerState(config)
    try:
        thinker = Thinker(harness.queues, state={"mh": state})
        thinker.register_agent(AgentSpec(name="primer", kind="startup", body=_startup_body))
        thinker.register_agent(
            AgentSpec(name="step", kind="result_processor", body=_step_body, binding="default")
        )
        thinker.run()
        if state.failure is not None:
            raise BenchAbortedError(
                f"log-density task {state.failure['task_id']} failed "
                f"({state.failure['failure_category']}): "
                f"{state.failure['failure_message']}",
                diagnostic=dict(state.failure),
            )
        return state.samples
    finally:
        if own_harness:
            harness.close()


def reference_mh_oracle(config: MHConfig) -> list[np.ndarray]:
    """Single-threaded sampler with the identical schedule and rng usage.

    Walker evaluations sit in a FIFO queue exactly as the one-slot engine
    orders them, so for equal configs and seeds the returned samples match
    ``run_mh_sampler`` element for element.
    """
    target = TARGETS[config.target]
    rngs = [np.random.default_rng([config.seed, w]) for w in range(config.walkers)]
    x: list = [None] * config.walkers
    log_p = [-math.inf] * config.walkers
    pending: deque[tuple[int, np.ndarray]] = deque()
    for walker in range(config.walkers):
        position = rngs[walker].uniform(-1.0, 1.0, config.dim)
        x[walker] = position
        pending.append((walker, position))
    samples: list[np.ndarray] = []
    while True:
        walker, proposed = pending.popleft()
        new_lp = target(proposed.tolist())
        if metropolis_accept(rngs[walker], log_p[walker], new_lp):
            x[walker] = proposed
            log_p[walker] = new_lp
        samples.append(x[walker].copy())
        if len(samples) >= config.num_samples:
            return samples
        next_position = x[walker] + rngs[walker].uniform(
            -config.step_width, config.step_width, config.dim
        )
        pending.append((walker, next_position))


def discrete_occupancy(log_probs, steps: int, seed: int = 0) -> np.ndarray:
    """Occupancy fractions of a Metropolis chain over a small discrete target.

    Proposal: one of the other states, uniformly (symmetric). Used as a
    brute-force detailed-balance check.
    """
    log_probs = [float(v) for v in log_probs]
    n = len(log_probs)
    if n < 2:
        raise ValueError("need at least two states")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    counts = np.zeros(n, dtype=np.int64)
    state = 0
    for _ in range(steps):
        proposal = (state + 1 + int(rng.integers(n - 1))) % n
        if metropolis_accept(rng, log_probs[state], log_probs[proposal]):
            state = proposal
        counts[state] += 1
    return counts / steps
