"""Command-line entry points for the benchmark applications."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..errors import BenchAbortedError, SteerflowError
from .mh import MHConfig, run_mh_sampler
from .reports import emit_report
from .task_limit import BenchConfig, run_task_limit


def _parse_threshold(text: str) -> int | None:
    if text.lower() == "off":
        return None
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("threshold must be >= 1 or 'off'")
    return value


def task_limit_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="task-limit",
        description="Constant-in-flight latency benchmark over the steering engine.",
    )
    parser.add_argument("--workers", type=int, required=True, help="in-flight task count")
    parser.add_argument("--tasks", type=int, required=True, help="total task submissions")
    parser.add_argument("--mean-sleep", type=float, default=10.0, metavar="SECONDS")
    parser.add_argument("--std-sleep", type=float, default=1.0, metavar="SECONDS")
    parser.add_argument("--payload", type=int, default=10_000_000, metavar="BYTES")
    parser.add_argument("--queue", choices=("inproc", "tcp"), default="inproc")
    parser.add_argument(
        "--proxy-threshold",
        type=_parse_threshold,
        default=None,
        metavar="BYTES|off",
        help="proxy values larger than this many bytes (default: off)",
    )
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--report", default=None, metavar="PATH")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--executor", choices=("local", "remote"), default="local")
    parser.add_argument("--listen", default=None, metavar="HOST:PORT",
                        help="remote executor listen endpoint")
    parser.add_argument("--expect-workers", type=int, default=0,
                        help="wait for this many remote workers before starting")
    parser.add_argument("--heartbeat", type=float, default=5.0, metavar="SECONDS")
    args = parser.parse_args(argv)

    config = BenchConfig(
        workers=args.workers,
        total_tasks=args.tasks,
        mean_sleep_s=args.mean_sleep,
        std_sleep_s=args.std_sleep,
        payload_bytes=args.payload,
        queue=args.queue,
        proxy_threshold_bytes=args.proxy_threshold,
        seed=args.seed,
        executor=args.executor,
        listen=args.listen,
        expect_workers=args.expect_workers,
        heartbeat_s=args.heartbeat,
    )
    try:
        report = run_task_limit(config)
    except BenchAbortedError as exc:
        print(f"task-limit: aborted: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostic, sort_keys=True), file=sys.stderr)
        return 1
    except SteerflowError as exc:
        print(f"task-limit: error: {exc}", file=sys.stderr)
        return 1
    if args.report:
        emit_report(report, format=args.format, path=args.report)
    reaction = report.aggregates["reaction_s"]["mean"]
    print(
        f"task-limit: {len(report.rows)} latency rows, "
        f"{report.task_rate_per_s:.2f} tasks/s, "
        f"mean reaction {reaction if reaction is None else f'{reaction:.6f}'} s"
    )
    return 0


def mh_sample_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mh-sample",
        description="Ensemble Metropolis-Hastings sampling over the steering engine.",
    )
    parser.add_argument("--walkers", type=int, default=8)
    parser.add_argument("--dim", type=int, default=8)
    parser.add_argument("--samples", type=int, default=256)
    parser.add_argument("--step", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--target", choices=("gaussian",), default="gaussian")
    parser.add_argument("--out", default=None, metavar="PATH")
    args = parser.parse_args(argv)

    config = MHConfig(
        walkers=args.walkers,
        dim=args.dim,
        num_samples=args.samples,
        step_width=args.step,
        target=args.target,
        seed=args.seed,
    )
    try:
        samples = run_mh_sampler(config)
    except (BenchAbortedError, SteerflowError) as exc:
        print(f"mh-sample: aborted: {exc}", file=sys.stderr)
        return 1
    if args.out:
        payload = {
            "v": 1,
            "config": config.to_dict(),
            "samples": [sample.tolist() for sample in samples],
        }
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(payload, handle)
            handle.write("\n")
    stacked = np.stack(samples)
    print(
        f"mh-sample: {len(samples)} samples, mean {stacked.mean():.4f}, "
        f"variance {stacked.var():.4f}"
    )
    return 0
