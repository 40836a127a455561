"""Experiment execution: single runs, impairment sweeps, TCP parameter
grids, and remediation advice derived from observed failure kinds.

All batch modes are deterministic: runs execute in a fixed order, rows are
sorted before run_ids are assigned, and every run's RunResult depends only
on its effective config and seed.
"""

from __future__ import annotations

import io
import csv as csv_mod
import math
from typing import Optional

from pydantic import BaseModel

from .chaos import ChaosAction
from .config import ConfigError, ExperimentConfig
from .fl import run_training
from .metrics import RunResult, RunRow, classify, make_row, round_rows_for
from .tcp import TcpParams


class RunReport(BaseModel):
    rows: list[RunRow]
    results: list[RunResult]
    round_rows: list[dict]
    summary: str


class SweepReport(BaseModel):
    rows: list[RunRow]
    round_rows: list[dict]
    table: str


class GridReport(BaseModel):
    rows: list[RunRow]
    round_rows: list[dict]
    matrix_csv: str
    summary: str


class RecommendReport(BaseModel):
    report: str


def execute_single(cfg: ExperimentConfig) -> RunResult:
    effective = cfg.model_copy(update={"sweep": None, "tcp_grid": None})
    return run_training(effective.setup())


def _finalize_rows(tagged: list[tuple[tuple, RunRow, RunResult]]) -> tuple[list[RunRow], list[dict]]:
    """Sort runs deterministically, then assign run_ids in that order."""
    tagged.sort(key=lambda item: item[0])
    rows, round_rows = [], []
    for idx, (_, row, result) in enumerate(tagged):
        row.run_id = f"r{idx:03d}"
        rows.append(row)
        round_rows.extend(round_rows_for(row.run_id, result))
    return rows, round_rows


def run_command(cfg: ExperimentConfig) -> RunReport:
    result = execute_single(cfg)
    row = make_row(result, axis="single", axis_value=0.0, run_id="r000")
    summary = (
        f"run {result.config_digest}: rounds={result.rounds_completed} "
        f"time={result.total_time:.3f}s accuracy={result.final_accuracy:.4f} "
        f"failure={result.failure_kind or 'None'}"
    )
    return RunReport(rows=[row], results=[result], round_rows=round_rows_for("r000", result), summary=summary)


_AXIS_RANGES = {"delay_s": (0.0, math.inf), "loss_pct": (0.0, 100.0), "client_failure_pct": (0.0, 100.0)}


def _with_axis_value(cfg: ExperimentConfig, axis: str, value: float, seed: int, kill_at: float) -> ExperimentConfig:
    lo, hi = _AXIS_RANGES[axis]
    if not lo <= value <= hi:
        raise ConfigError(f"{axis} value {value} outside [{lo}, {hi}]")
    update: dict = {"master_seed": seed, "sweep": None, "tcp_grid": None}
    if axis == "delay_s":
        update["link"] = cfg.link.model_copy(update={"one_way_delay": value})
    elif axis == "loss_pct":
        update["link"] = cfg.link.model_copy(update={"loss_prob": value / 100.0})
    else:
        kill = ChaosAction(at=kill_at, kind="kill_clients", fraction=value / 100.0)
        update["chaos"] = sorted([*cfg.chaos, kill], key=lambda a: a.at)
    return cfg.model_copy(update=update)


def sweep_command(cfg: ExperimentConfig, seeds_override: Optional[int] = None) -> SweepReport:
    if cfg.sweep is None:
        raise ConfigError("sweep mode needs a sweep section in the config")
    spec = cfg.sweep
    n_seeds = seeds_override if seeds_override is not None else spec.seed_count()
    tagged = []
    by_value: dict[float, list[RunResult]] = {}
    for value in spec.values:
        for k in range(n_seeds):
            seed = cfg.master_seed + k
            effective = _with_axis_value(cfg, spec.axis, value, seed, spec.kill_at)
            result = run_training(effective.setup())
            row = make_row(result, axis=spec.axis, axis_value=value)
            tagged.append(((spec.axis, value, "", seed), row, result))
            by_value.setdefault(value, []).append(result)
    rows, round_rows = _finalize_rows(tagged)
    table = render_threshold_table(spec.axis, by_value)
    return SweepReport(rows=rows, round_rows=round_rows, table=table)


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    return ordered[mid] if n % 2 else 0.5 * (ordered[mid - 1] + ordered[mid])


def observed_class(results: list[RunResult], baseline_time: Optional[float]) -> str:
    """Empirical band for one swept value: majority failure => Failure,
    median time beyond 1.5x the sweep's best-case => Tolerable, else Acceptable."""
    failures = [r for r in results if r.failure_kind]
    if 2 * len(failures) > len(results):
        return "Failure"
    completed = [r.total_time for r in results if not r.failure_kind]
    if baseline_time is None or not completed:
        return "Tolerable"
    return "Tolerable" if _median(completed) > 1.5 * baseline_time else "Acceptable"


def render_threshold_table(axis: str, by_value: dict[float, list[RunResult]]) -> str:
    values = sorted(by_value)
    baseline_time: Optional[float] = None
    for value in values:
        completed = [r.total_time for r in by_value[value] if not r.failure_kind]
        if completed:
            baseline_time = _median(completed)
            break
    header = f"{axis:>20} | reference band | observed  | median time s | failure kinds"
    lines = [header, "-" * len(header)]
    for value in values:
        results = by_value[value]
        ref = classify(axis, value)
        ref_label = ref.label + ("*" if ref.interpolated else "")
        obs = observed_class(results, baseline_time)
        completed = [r.total_time for r in results if not r.failure_kind]
        med = f"{_median(completed):.1f}" if completed else "-"
        kinds = sorted({r.failure_kind for r in results if r.failure_kind})
        lines.append(f"{value:>20} | {ref_label:>14} | {obs:>9} | {med:>13} | {','.join(kinds) or '-'}")
    lines.append("(* band boundary interpolated from the nearest lower band)")
    return "\n".join(lines)


def grid_command(cfg: ExperimentConfig) -> GridReport:
    if cfg.tcp_grid is None:
        raise ConfigError("grid mode needs a tcp_grid section in the config")
    spec = cfg.tcp_grid
    field = TcpParams.model_fields[spec.param]
    tagged = []
    cells: dict[tuple[float, float], RunResult] = {}
    for pv in spec.values:
        typed = _coerce_param(spec.param, pv)
        for lat in spec.latencies:
            link = cfg.link.model_copy(update={"one_way_delay": lat})
            tcp = cfg.tcp.model_copy(update={spec.param: typed})
            effective = cfg.model_copy(
                update={"link": link, "tcp": tcp, "sweep": None, "tcp_grid": None}
            )
            result = run_training(effective.setup())
            overrides = f"{spec.param}={typed}"
            row = make_row(result, axis="delay_s", axis_value=lat, tcp_param_overrides=overrides)
            tagged.append((("delay_s", float(pv), overrides, lat), row, result))
            cells[(float(pv), lat)] = result
    rows, round_rows = _finalize_rows(tagged)
    matrix_csv, summary = _render_grid(spec, field.default, cells)
    return GridReport(rows=rows, round_rows=round_rows, matrix_csv=matrix_csv, summary=summary)


def _coerce_param(param: str, value: float):
    annotation = TcpParams.model_fields[param].annotation
    if annotation is int:
        if value != int(value):
            raise ConfigError(f"{param} takes integer values, got {value}")
        return int(value)
    if annotation is bool:
        return bool(value)
    return float(value)


def _render_grid(spec, default_value, cells: dict[tuple[float, float], RunResult]) -> tuple[str, str]:
    buf = io.StringIO()
    writer = csv_mod.writer(buf)
    writer.writerow([spec.param] + [repr(lat) for lat in spec.latencies])
    for pv in spec.values:
        line = [repr(float(pv))]
        for lat in spec.latencies:
            result = cells[(float(pv), lat)]
            line.append(repr(result.total_time) if not result.failure_kind else f"FAIL:{result.failure_kind}")
        writer.writerow(line)
    best_marks = []
    default_best = 0
    for lat in spec.latencies:
        scored = [
            (cells[(float(pv), lat)].total_time, float(pv))
            for pv in spec.values
            if not cells[(float(pv), lat)].failure_kind
        ]
        if not scored:
            best_marks.append(f"latency {lat}: all values fail")
            continue
        best_time, best_pv = min(scored)
        is_default = float(default_value) == best_pv
        default_best += int(is_default)
        best_marks.append(
            f"latency {lat}: best {spec.param}={best_pv:g} ({best_time:.1f}s)"
            + (" [default]" if is_default else "")
        )
    summary = "\n".join(
        best_marks
        + [f"default {spec.param}={default_value} is best at {default_best}/{len(spec.latencies)} latencies"]
    )
    return buf.getvalue(), summary


_REMEDIES = {
    "ConnectTimeout": (
        "raise tcp.connect_deadline (e.g. 10 -> 60) together with tcp.syn_retries (e.g. 6 -> 10) "
        "so the handshake survives long round trips"
    ),
    "RetriesExceeded": (
        "raise tcp.retries2 and the application deadlines so stalled transfers outlive loss bursts"
    ),
    "BufferStall": (
        "raise tcp.rmem_bytes so reassembly survives sustained loss; expect noticeably longer training times"
    ),
    "InsufficientClients": (
        "lower strategy.min_fit_fraction so rounds can proceed with fewer live clients"
    ),
    "DeadlineNoQuorum": (
        "lower strategy.min_fit_fraction and/or raise strategy.round_deadline; sustained loss above the "
        "failure band may stay untrainable regardless"
    ),
}


def recommend_command(rows: list[RunRow]) -> RecommendReport:
    if not rows:
        raise ConfigError("no rows in CSV")
    by_kind: dict[str, list[str]] = {}
    for row in rows:
        if row.failure_kind != "None":
            by_kind.setdefault(row.failure_kind, []).append(row.run_id)
    if not by_kind:
        return RecommendReport(report="no remediation needed: every run completed training")
    lines = []
    for kind in sorted(by_kind):
        run_ids = by_kind[kind]
        remedy = _REMEDIES.get(kind, "inspect transport counters for this failure kind")
        lines.append(f"{kind} ({len(run_ids)} runs, e.g. {run_ids[0]}): {remedy}")
    return RecommendReport(report="\n".join(lines))
