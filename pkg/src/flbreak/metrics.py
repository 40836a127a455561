"""Run/round measurement records, the impairment threshold classifier, and
CSV emission.

The classifier encodes the observed operating bands per impairment axis:
values inside a listed band classify exactly; values falling in the gap
between two bands take the band just below and are flagged interpolated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field


class UnknownAxis(ValueError):
    pass


class ThresholdClass(IntEnum):
    ACCEPTABLE = 0
    TOLERABLE = 1
    FAILURE = 2

    def label(self) -> str:
        return {0: "Acceptable", 1: "Tolerable", 2: "Failure"}[int(self)]


@dataclass(frozen=True)
class Classification:
    threshold: ThresholdClass
    interpolated: bool

    @property
    def label(self) -> str:
        return self.threshold.label()


SWEEP_AXES = ("delay_s", "loss_pct", "client_failure_pct")


def classify(axis: str, value: float) -> Classification:
    """Operating-band classification per impairment axis.

    Bands: delay_s <0.3 / 5 / >5; loss_pct <10 / 30-40 / >50;
    client_failure_pct <50 / 50-70 / >90.
    """
    if axis == "delay_s":
        if value < 0.3:
            return Classification(ThresholdClass.ACCEPTABLE, False)
        if value < 5.0:
            return Classification(ThresholdClass.ACCEPTABLE, True)
        if value == 5.0:
            return Classification(ThresholdClass.TOLERABLE, False)
        return Classification(ThresholdClass.FAILURE, False)
    if axis == "loss_pct":
        if value < 10.0:
            return Classification(ThresholdClass.ACCEPTABLE, False)
        if value < 30.0:
            return Classification(ThresholdClass.ACCEPTABLE, True)
        if value <= 40.0:
            return Classification(ThresholdClass.TOLERABLE, False)
        if value <= 50.0:
            return Classification(ThresholdClass.TOLERABLE, True)
        return Classification(ThresholdClass.FAILURE, False)
    if axis == "client_failure_pct":
        if value < 50.0:
            return Classification(ThresholdClass.ACCEPTABLE, False)
        if value <= 70.0:
            return Classification(ThresholdClass.TOLERABLE, False)
        if value <= 90.0:
            return Classification(ThresholdClass.TOLERABLE, True)
        return Classification(ThresholdClass.FAILURE, False)
    raise UnknownAxis(f"unknown axis {axis!r}")


class RoundRecord(BaseModel):
    round_index: int
    participants: list[int]
    started_at: float
    ended_at: float
    updates_received: int
    eval_accuracy: float
    excluded_by_deadline: list[int]
    failure: Optional[str] = None


class TransportCounters(BaseModel):
    syn_retransmits: int = 0
    data_retransmits: int = 0
    keepalive_probes_sent: int = 0
    segments_dropped_buffer_full: int = 0
    aborts_by_kind: dict[str, int] = Field(default_factory=dict)


class RunResult(BaseModel):
    config_digest: str
    master_seed: int
    total_time: float
    rounds_completed: int
    final_accuracy: float
    failure_kind: Optional[str] = None
    rounds: list[RoundRecord] = Field(default_factory=list)
    transport: TransportCounters = Field(default_factory=TransportCounters)
    bytes_sent: int = 0
    bytes_delivered: int = 0
    bytes_up: int = 0
    bytes_down: int = 0


class RunRow(BaseModel):
    """One emitted CSV row; column set and order are part of the interface."""

    run_id: str
    master_seed: int
    axis: str
    axis_value: float
    tcp_param_overrides: str
    total_time_s: float
    rounds_completed: int
    final_accuracy: float
    failure_kind: str
    syn_retransmits: int
    data_retransmits: int
    keepalive_probes_sent: int
    buffer_drops: int
    bytes_sent: int
    bytes_delivered: int
    threshold_class: str


CSV_COLUMNS = list(RunRow.model_fields)

ROUND_CSV_COLUMNS = [
    "run_id",
    "round_index",
    "started_at",
    "ended_at",
    "participants",
    "updates_received",
    "eval_accuracy",
    "excluded_by_deadline",
    "failure",
]


def make_row(
    result: RunResult,
    axis: str = "single",
    axis_value: float = 0.0,
    tcp_param_overrides: str = "",
    run_id: str = "",
) -> RunRow:
    if axis in SWEEP_AXES:
        threshold = classify(axis, axis_value).label
    else:
        threshold = ""
    return RunRow(
        run_id=run_id,
        master_seed=result.master_seed,
        axis=axis,
        axis_value=axis_value,
        tcp_param_overrides=tcp_param_overrides,
        total_time_s=result.total_time,
        rounds_completed=result.rounds_completed,
        final_accuracy=result.final_accuracy,
        failure_kind=result.failure_kind or "None",
        syn_retransmits=result.transport.syn_retransmits,
        data_retransmits=result.transport.data_retransmits,
        keepalive_probes_sent=result.transport.keepalive_probes_sent,
        buffer_drops=result.transport.segments_dropped_buffer_full,
        bytes_sent=result.bytes_sent,
        bytes_delivered=result.bytes_delivered,
        threshold_class=threshold,
    )


def _fmt(value) -> str:
    # repr keeps floats exactly round-trippable
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(rows: list[RunRow], path: str | Path) -> Path:
    """Write run rows sorted by run_id, one per run."""
    if not rows:
        raise ValueError("no rows to emit")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in sorted(rows, key=lambda r: r.run_id):
            writer.writerow([_fmt(getattr(row, col)) for col in CSV_COLUMNS])
    return path


def emit_round_csv(round_rows: list[dict], path: str | Path) -> Path:
    """Long-format per-round companion file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROUND_CSV_COLUMNS)
        for rr in round_rows:
            writer.writerow([_fmt(rr[col]) for col in ROUND_CSV_COLUMNS])
    return path


def round_rows_for(run_id: str, result: RunResult) -> list[dict]:
    rows = []
    for rec in result.rounds:
        rows.append(
            {
                "run_id": run_id,
                "round_index": rec.round_index,
                "started_at": rec.started_at,
                "ended_at": rec.ended_at,
                "participants": len(rec.participants),
                "updates_received": rec.updates_received,
                "eval_accuracy": rec.eval_accuracy,
                "excluded_by_deadline": len(rec.excluded_by_deadline),
                "failure": rec.failure or "None",
            }
        )
    return rows


def read_csv(path_or_text: str | Path) -> list[RunRow]:
    """Parse a runs CSV produced by emit_csv back into typed rows."""
    if isinstance(path_or_text, Path) or "\n" not in str(path_or_text):
        text = Path(path_or_text).read_text()
    else:
        text = str(path_or_text)
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV columns: {reader.fieldnames}")
    return [RunRow(**record) for record in reader]
