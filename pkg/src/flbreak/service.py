"""HTTP service exposing the simulator: submit an experiment config, get
typed results back. The CLI is a thin client of this app; long sweeps run
inside the request.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .config import ConfigError, ExperimentConfig
from .experiments import (
    GridReport,
    RecommendReport,
    RunReport,
    SweepReport,
    grid_command,
    recommend_command,
    run_command,
    sweep_command,
)
from .metrics import UnknownAxis, classify, read_csv
from .sim import SimError


class RunRequest(BaseModel):
    config: ExperimentConfig


class SweepRequest(BaseModel):
    config: ExperimentConfig
    seeds: Optional[int] = None


class GridRequest(BaseModel):
    config: ExperimentConfig


class RecommendRequest(BaseModel):
    csv_text: str


class ClassifyRequest(BaseModel):
    axis: str
    value: float


class ClassifyResponse(BaseModel):
    threshold_class: str
    interpolated: bool


class HealthResponse(BaseModel):
    status: str
    version: str


def create_app() -> FastAPI:
    app = FastAPI(title="flbreak", version=__version__)

    @app.exception_handler(ConfigError)
    async def _config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(UnknownAxis)
    async def _axis_error(request: Request, exc: UnknownAxis):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(SimError)
    async def _sim_error(request: Request, exc: SimError):
        return JSONResponse(status_code=500, content={"detail": f"internal invariant violation: {exc}"})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/run", response_model=RunReport)
    def run(req: RunRequest) -> RunReport:
        return run_command(req.config)

    @app.post("/sweep", response_model=SweepReport)
    def sweep(req: SweepRequest) -> SweepReport:
        return sweep_command(req.config, seeds_override=req.seeds)

    @app.post("/grid", response_model=GridReport)
    def grid(req: GridRequest) -> GridReport:
        return grid_command(req.config)

    @app.post("/recommend", response_model=RecommendReport)
    def recommend(req: RecommendRequest) -> RecommendReport:
        try:
            rows = read_csv(req.csv_text)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"cannot parse result CSV: {exc}") from exc
        return recommend_command(rows)

    @app.post("/classify", response_model=ClassifyResponse)
    def classify_value(req: ClassifyRequest) -> ClassifyResponse:
        cls = classify(req.axis, req.value)
        return ClassifyResponse(threshold_class=cls.label, interpolated=cls.interpolated)

    return app


app = create_app()
