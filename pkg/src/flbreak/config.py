"""Experiment configuration: file schema, validation, stable digests.

One YAML (or JSON) file drives everything. Sections mirror the runtime
objects one-to-one: strategy, link, tcp, chaos, plus at most one of the
sweep / tcp_grid blocks selecting batch mode.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from .chaos import ChaosAction
from .fl import ExperimentSetup, StrategyConfig
from .link import LinkConfig
from .tcp import SYSCTL_ALIASES, TcpParams


class ConfigError(ValueError):
    """Human-readable configuration problem (file, field, or value)."""


DEFAULT_GRID_LATENCIES = [round(i * 0.05, 2) for i in range(17)]  # 0 .. 800 ms


class SweepSpec(BaseModel):
    axis: Literal["delay_s", "loss_pct", "client_failure_pct"]
    values: list[float] = Field(min_length=2)
    seeds: Optional[int] = Field(default=None, ge=1, description="default: 5 for loss_pct, else 1")
    kill_at: float = Field(default=45.0, gt=0.0, description="kill time for the client_failure axis, seconds")

    def seed_count(self) -> int:
        if self.seeds is not None:
            return self.seeds
        return 5 if self.axis == "loss_pct" else 1


class GridSpec(BaseModel):
    param: str
    values: list[float]
    latencies: list[float] = Field(default_factory=lambda: list(DEFAULT_GRID_LATENCIES))

    @model_validator(mode="after")
    def _check_param(self) -> "GridSpec":
        self.param = SYSCTL_ALIASES.get(self.param, self.param)
        if self.param not in TcpParams.model_fields:
            raise ValueError(f"unknown tcp parameter {self.param!r}")
        if not self.values:
            raise ValueError("grid needs at least one value")
        if not self.latencies:
            raise ValueError("grid needs at least one latency")
        return self


class ExperimentConfig(BaseModel):
    master_seed: int = 1
    dataset_seed: Optional[int] = None
    strategy: StrategyConfig = Field(default_factory=StrategyConfig)
    link: LinkConfig = Field(default_factory=LinkConfig)
    tcp: TcpParams = Field(default_factory=TcpParams)
    chaos: list[ChaosAction] = Field(default_factory=list)
    sweep: Optional[SweepSpec] = None
    tcp_grid: Optional[GridSpec] = None

    @model_validator(mode="after")
    def _single_mode(self) -> "ExperimentConfig":
        if self.sweep is not None and self.tcp_grid is not None:
            raise ValueError("config may set sweep or tcp_grid, not both")
        return self

    def setup(self) -> ExperimentSetup:
        return ExperimentSetup(
            master_seed=self.master_seed,
            dataset_seed=self.dataset_seed,
            strategy=self.strategy,
            link=self.link,
            tcp=self.tcp,
            chaos=self.chaos,
        )


def _format_validation_error(err: ValidationError) -> str:
    lines = []
    for item in err.errors():
        loc = ".".join(str(p) for p in item["loc"]) or "<root>"
        lines.append(f"  field {loc}: {item['msg']}")
    return "\n".join(lines)


def parse_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as err:
        raise ConfigError(f"invalid configuration:\n{_format_validation_error(err)}") from err


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"cannot parse {path}{where}: {getattr(err, 'problem', err)}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    return parse_config(raw)


def config_digest(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
