"""Benchmark report assembly and serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..latency import LatencyBreakdown

REPORT_VERSION = 1

CSV_COLUMNS = ("reaction_s", "decision_s", "dispatch_s", "compute_s")
_AGGREGATED = ("reaction_s", "decision_s", "dispatch_s")


def row_from_breakdown(breakdown: LatencyBreakdown, gap_s: float) -> dict:
    return {
        "reaction_s": breakdown.reaction_s,
        "decision_s": breakdown.decision_s,
        "dispatch_s": breakdown.dispatch_s,
        "compute_s": breakdown.compute_s,
        "round_trip_s": breakdown.round_trip_s,
        "gap_s": gap_s,
        "skew_clamped": breakdown.skew_clamped,
    }


def aggregate_rows(rows: list[dict]) -> dict:
    aggregates = {}
    for name in _AGGREGATED:
        values = np.array([row[name] for row in rows], dtype=float)
        if values.size == 0:
            aggregates[name] = {"mean": None, "median": None, "p95": None}
        else:
            aggregates[name] = {
                "mean": float(values.mean()),
                "median": float(np.median(values)),
                "p95": float(np.percentile(values, 95)),
            }
    return aggregates


@dataclass
class BenchReport:
    """Machine-readable outcome of one task-limit run."""

    config: dict
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    task_rate_per_s: float = 0.0
    trace: list = field(default_factory=list)  # [label, in_flight_after] pairs
    max_record_bytes: int = 0
    executor_stats: dict = field(default_factory=dict)
    v: int = REPORT_VERSION

    def to_dict(self) -> dict:
        return {
            "v": self.v,
            "config": self.config,
            "rows": self.rows,
            "aggregates": self.aggregates,
            "task_rate_per_s": self.task_rate_per_s,
            "trace": self.trace,
            "max_record_bytes": self.max_record_bytes,
            "executor_stats": self.executor_stats,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchReport":
        return cls(
            v=data["v"],
            config=data["config"],
            rows=data["rows"],
            aggregates=data["aggregates"],
            task_rate_per_s=data["task_rate_per_s"],
            trace=[list(item) for item in data["trace"]],
            max_record_bytes=data["max_record_bytes"],
            executor_stats=data.get("executor_stats", {}),
        )


def report_to_csv(report: BenchReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        writer.writerow([row[name] for name in CSV_COLUMNS])
    return buffer.getvalue()


def emit_report(report: BenchReport, format: str = "json", path: str | None = None) -> str:
    """Render the report; write it to ``path`` when given. Returns the text."""
    if format == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    elif format == "csv":
        text = report_to_csv(report)
    else:
        raise ValueError(f"unknown report format: {format!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    return text


def load_report(path: str) -> BenchReport:
    with open(path, "r", encoding="utf-8") as handle:
        return BenchReport.from_dict(json.load(handle))
