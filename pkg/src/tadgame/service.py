"""HTTP API over the engine (FastAPI).  The CLI talks to this app, in process by default."""

from __future__ import annotations

import math
from typing import Any, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .config import (ScenarioConfig, bundled_scenarios, load_scenario, parse_scenario,
                     scenario_from_dict)
from .errors import ParseError, TadError, ValidationError
from .export import comparison_dict, metrics_dict, trajectory_csv, zone_csv, zone_svg
from .simulation import (COLUMNS, compare, default_sweep_grid, run_simulation,
                         sweep_zone_validation, zone_params_for)
from .zones import GridSpec, ZoneMode, ZoneParams, build_zone_map


class ScenarioRef(BaseModel):
    scenario: Optional[str] = Field(None, description="bundled scenario name or file path")
    config: Optional[dict[str, Any]] = Field(None, description="inline scenario, same layout as the TOML file")
    toml: Optional[str] = Field(None, description="scenario file text")
    seed: Optional[int] = Field(None, ge=0)

    def resolve(self) -> ScenarioConfig:
        given = [v is not None for v in (self.scenario, self.config, self.toml)]
        if sum(given) != 1:
            raise ValidationError("give exactly one of 'scenario', 'config' or 'toml'")
        if self.config is not None:
            return scenario_from_dict(self.config, "config")
        if self.toml is not None:
            return parse_scenario(self.toml, "toml")
        return load_scenario(self.scenario)


class SimulateRequest(ScenarioRef):
    include_trajectory: bool = False


class Metrics(BaseModel):
    interception_time: Optional[float]
    avg_control_effort_defender: Optional[float]
    avg_control_effort_combined: Optional[float]
    avg_solver_time_per_iteration: Optional[float]


class SimulateResponse(BaseModel):
    scenario: str
    outcome: str
    event_time: Optional[float]
    steps: int
    metrics: Optional[Metrics]
    columns: list[str]
    trajectory_csv: Optional[str] = None


class ZonesRequest(BaseModel):
    mode: ZoneMode = ZoneMode.CONSTANT_SPEED
    gamma_at: float = 0.5
    gamma_ad: float = 1.0
    xa: float = 0.5
    e: float = Field(0.5, description="safe distance as a fraction of the initial A-T range")
    sigma: float = Field(0.0, ge=0.0, description="attacker position 1-sigma (m), stochastic mode")
    grid: int = Field(41, ge=1, le=1001)
    extent: Optional[tuple[float, float, float, float]] = None
    include_svg: bool = False


class ZonesResponse(BaseModel):
    mode: str
    xs: list[float]
    ys: list[float]
    labels: list[list[str]]
    boundary: list[list[tuple[float, float]]]
    escape_area: float
    errors: int
    csv: str
    svg: Optional[str] = None


class SweepRequest(ScenarioRef):
    grid: int = Field(21, ge=0, le=101)
    mode: ZoneMode = ZoneMode.CONSTANT_SPEED
    extent: Optional[tuple[float, float, float, float]] = None


class SweepCellModel(BaseModel):
    x: float
    y: float
    predicted: str
    simulated: Optional[str]
    event_time: Optional[float]
    near_boundary: bool
    error: Optional[str]


class SweepResponse(BaseModel):
    agreement: Optional[float]
    evaluated: int
    wall_time: float
    cells: list[SweepCellModel]


class CompareRequest(ScenarioRef):
    controllers: list[str] = Field(default_factory=lambda: ["nmpc", "clos", "aclos"])


class CompareRow(BaseModel):
    controller: str
    outcome: Optional[str]
    metrics: Optional[Metrics]
    error: Optional[str]


class CompareResponse(BaseModel):
    scenario: str
    rows: list[CompareRow]


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


app = FastAPI(title="tadgame", version=__version__)


@app.exception_handler(ParseError)
@app.exception_handler(ValidationError)
@app.exception_handler(FileNotFoundError)
async def _bad_input(_: Request, exc: Exception):
    return JSONResponse(status_code=422, content={"error": type(exc).__name__, "detail": str(exc)})


@app.exception_handler(ValueError)
async def _bad_value(_: Request, exc: Exception):
    return JSONResponse(status_code=422, content={"error": "ValidationError", "detail": str(exc)})


@app.exception_handler(TadError)
async def _runtime(_: Request, exc: Exception):
    return JSONResponse(status_code=500, content={"error": type(exc).__name__, "detail": str(exc)})


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/scenarios")
def scenarios() -> dict:
    return {"scenarios": bundled_scenarios()}


@app.get("/scenarios/{name}")
def scenario(name: str) -> dict:
    return load_scenario(name).model_dump(mode="json")


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    cfg = req.resolve()
    res = run_simulation(cfg, seed=req.seed)
    md = metrics_dict(res)
    return SimulateResponse(
        scenario=cfg.name, outcome=md["outcome"], event_time=md["event_time"], steps=res.steps,
        metrics=md["metrics"], columns=list(COLUMNS),
        trajectory_csv=trajectory_csv(res) if req.include_trajectory else None,
    )


@app.post("/zones", response_model=ZonesResponse)
def zones(req: ZonesRequest) -> ZonesResponse:
    p = ZoneParams(x_A=req.xa, gamma_AT=req.gamma_at, gamma_AD=req.gamma_ad,
                   e_fraction=req.e, sigma_pos=req.sigma)
    if req.extent is not None:
        grid = GridSpec(*req.extent, req.grid, req.grid)
    else:
        grid = GridSpec.square(3.0 * req.xa, req.grid)
    zmap = build_zone_map(p, grid, req.mode)
    xs, ys = grid.centers()
    return ZonesResponse(
        mode=zmap.mode.value, xs=xs.tolist(), ys=ys.tolist(),
        labels=[[lab.value for lab in row] for row in zmap.labels],
        boundary=[[(float(x), float(y)) for x, y in line] for line in zmap.boundary],
        escape_area=zmap.escape_area(), errors=len(zmap.errors), csv=zone_csv(zmap),
        svg=zone_svg(zmap) if req.include_svg else None,
    )


@app.post("/sweep", response_model=SweepResponse)
def sweep(req: SweepRequest) -> SweepResponse:
    cfg = req.resolve()
    p = zone_params_for(cfg)
    grid = GridSpec(*req.extent, req.grid, req.grid) if req.extent else default_sweep_grid(p.x_A, req.grid)
    rep = sweep_zone_validation(p, grid, cfg, req.mode, master_seed=req.seed)
    return SweepResponse(agreement=_finite(rep.agreement), evaluated=rep.evaluated,
                         wall_time=rep.wall_time, cells=[c.__dict__ for c in rep.cells])


@app.post("/compare", response_model=CompareResponse)
def compare_controllers(req: CompareRequest) -> CompareResponse:
    cfg = req.resolve()
    rows = compare(cfg, req.controllers, seed=req.seed)
    return CompareResponse(scenario=cfg.name, rows=comparison_dict(rows))
