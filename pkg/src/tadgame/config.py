"""Scenario files: TOML text validated into a :class:`ScenarioConfig`.

Layout (every table except ``target``/``attacker``/``defender`` is optional)::

    name = "cs_escape"
    controller = "nmpc"          # nmpc | clos | aclos
    duration = 60.0              # s
    seed = 0

    [target]    position, heading, speed, max_speed, mode
    [attacker]  position, heading, speed
    [defender]  position, heading, speed
    [capture]   R_c, r_c
    [safe_distance]  e (m) or fraction (of the initial A-T range)
    [guidance]  kappa, nav_constant, switch_period, clos_kp, clos_kd
    [noise]     Q, Sigma (4 diagonal entries or a 4x4 matrix)
    [nmpc]      horizon_steps, dt, alpha_dot_max, max_iters, conv_tol, fd_step
    [nmpc.weights]  effort, range, safe
"""

from __future__ import annotations

import math
import re
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pydantic
import tomli
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .engagement import AgentState, EngagementState
from .errors import ParseError, ValidationError
from .estimator import PAPER_Q, PAPER_SIGMA, NoiseConfig
from .guidance import GuidanceConfig
from .nmpc import CostWeights, NmpcConfig, TargetMode


class Controller(str, Enum):
    NMPC = "nmpc"
    CLOS = "clos"
    ACLOS = "aclos"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AgentSpec(_Strict):
    position: tuple[float, float]
    heading: float = 0.0
    speed: float = Field(ge=0.0)

    def state(self) -> AgentState:
        return AgentState(self.position[0], self.position[1], self.heading, self.speed)


class TargetSpec(AgentSpec):
    speed: float = Field(0.0, ge=0.0)
    max_speed: float = Field(2.0, gt=0.0)
    mode: TargetMode = TargetMode.VARIABLE_VELOCITY

    @model_validator(mode="after")
    def _speed_bound(self):
        if self.speed > self.max_speed + 1e-9:
            raise ValueError("initial target speed exceeds max_speed")
        return self


class CaptureSpec(_Strict):
    R_c: float = Field(1.0, gt=0.0)
    r_c: float = Field(1.0, gt=0.0)


class SafeDistanceSpec(_Strict):
    e: Optional[float] = Field(None, ge=0.0)
    fraction: Optional[float] = Field(None, ge=0.0)

    @model_validator(mode="after")
    def _one_of(self):
        if self.e is not None and self.fraction is not None:
            raise ValueError("give either e or fraction, not both")
        return self


class GuidanceSpec(_Strict):
    kappa: float = Field(2.0, gt=0.0)
    nav_constant: float = Field(3.0, gt=0.0)
    switch_period: float = Field(1.0, gt=0.0)
    clos_kp: float = Field(10.0, ge=0.0)
    clos_kd: float = Field(5.0, ge=0.0)


Matrix = Union[list[float], list[list[float]]]


def _as_cov(value, name: str) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.shape == (4,):
        m = np.diag(m)
    if m.shape != (4, 4):
        raise ValueError(f"{name} must have 4 diagonal entries or be 4x4")
    if not np.allclose(m, m.T) or np.linalg.eigvalsh(m).min() <= 0:
        raise ValueError(f"{name} must be symmetric positive definite")
    return m


class NoiseSpec(_Strict):
    Q: Matrix = Field(default_factory=lambda: np.diag(PAPER_Q).tolist())
    Sigma: Matrix = Field(default_factory=lambda: np.diag(PAPER_SIGMA).tolist())

    @model_validator(mode="after")
    def _spd(self):
        _as_cov(self.Q, "Q")
        _as_cov(self.Sigma, "Sigma")
        return self


class WeightsSpec(_Strict):
    effort: float = Field(1.0, ge=0.0)
    range: float = Field(1.0, ge=0.0)
    safe: float = Field(1.0, ge=0.0)


class NmpcSpec(_Strict):
    horizon_steps: int = Field(6, ge=1)
    dt: float = Field(0.05, gt=0.0)
    prediction_dt: Optional[float] = Field(None, gt=0.0)  # horizon step; defaults to dt
    alpha_dot_max: float = Field(0.5, gt=0.0)
    max_iters: int = Field(200, ge=1)
    conv_tol: float = Field(1e-6, ge=0.0)
    fd_step: float = Field(1e-4, gt=0.0)
    weights: WeightsSpec = WeightsSpec()


class ScenarioConfig(_Strict):
    name: str = "scenario"
    description: str = ""
    controller: Controller = Controller.NMPC
    duration: float = Field(60.0, gt=0.0)
    seed: int = Field(0, ge=0)
    baseline_truth: bool = True   # CLOS/A-CLOS read the true attacker state instead of the estimate
    target: TargetSpec
    attacker: AgentSpec
    defender: AgentSpec
    capture: CaptureSpec = CaptureSpec()
    safe_distance: SafeDistanceSpec = SafeDistanceSpec()
    guidance: GuidanceSpec = GuidanceSpec()
    noise: NoiseSpec = NoiseSpec()
    nmpc: NmpcSpec = NmpcSpec()

    @model_validator(mode="after")
    def _positive_attacker(self):
        if self.attacker.speed <= 0 or self.defender.speed <= 0:
            raise ValueError("attacker and defender speeds must be positive")
        return self

    @property
    def initial_range(self) -> float:
        (tx, ty), (ax, ay) = self.target.position, self.attacker.position
        return math.hypot(tx - ax, ty - ay)

    @property
    def e(self) -> float:
        """Safe distance in metres, resolving a fractional setting against the initial range."""
        s = self.safe_distance
        if s.fraction is not None:
            return s.fraction * self.initial_range
        return s.e or 0.0

    @property
    def dt(self) -> float:
        return self.nmpc.dt

    def initial_state(self) -> EngagementState:
        return EngagementState(0.0, self.target.state(), self.attacker.state(), self.defender.state())

    def nmpc_config(self) -> NmpcConfig:
        n, w = self.nmpc, self.nmpc.weights
        return NmpcConfig(
            horizon_steps=n.horizon_steps, dt=n.prediction_dt or n.dt, v_T_max=self.target.max_speed,
            alpha_dot_bounds=(-n.alpha_dot_max, n.alpha_dot_max), safe_distance_e=self.e,
            max_iters=n.max_iters, conv_tol=n.conv_tol, fd_step=n.fd_step, mode=self.target.mode,
            weights=CostWeights(w.effort, w.range, w.safe),
        )

    def guidance_config(self) -> GuidanceConfig:
        g = self.guidance
        return GuidanceConfig(g.kappa, g.nav_constant, g.switch_period, g.clos_kp, g.clos_kd)

    def noise_config(self, seed: int | None = None) -> NoiseConfig:
        return NoiseConfig(_as_cov(self.noise.Q, "Q"), _as_cov(self.noise.Sigma, "Sigma"),
                           self.seed if seed is None else seed)

    def with_updates(self, **changes) -> "ScenarioConfig":
        """Copy with top-level or dotted (``"target.position"``) fields replaced, revalidated."""
        data = self.model_dump(mode="json")
        for key, value in changes.items():
            node = data
            *parents, leaf = key.split(".")
            for p in parents:
                node = node.setdefault(p, {})
            node[leaf] = value
        return scenario_from_dict(data)


_STRUCTURAL = {"missing", "extra_forbidden", "literal_error", "enum", "model_type",
               "tuple_type", "list_type", "dict_type", "too_short", "too_long"}


def _is_structural(kind: str) -> bool:
    return kind in _STRUCTURAL or kind.endswith("_type") or kind.endswith("_parsing")


def scenario_from_dict(data: dict, source: str = "<dict>") -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        errors = exc.errors()
        first = next((e for e in errors if _is_structural(e["type"])), None)
        if first is not None:
            loc = ".".join(str(p) for p in first["loc"]) or "<root>"
            raise ParseError(first["msg"], f"{source}: field {loc}") from None
        e = errors[0]
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        msg = e["msg"].removeprefix("Value error, ")
        raise ValidationError(f"{source}: {loc}: {msg}") from None


_LINE = re.compile(r"line (\d+)")


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = _LINE.search(str(exc))
        where = f"{source}: line {m.group(1)}" if m else source
        raise ParseError(str(exc), where) from None
    return scenario_from_dict(data, source)


def bundled_scenarios() -> list[str]:
    root = resources.files("tadgame") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_scenario(path_or_name: str | Path) -> ScenarioConfig:
    """Load a scenario file, or a bundled scenario by name (e.g. ``"cs_escape"``)."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_scenario(path.read_text(), str(path))
    name = str(path_or_name)
    res = resources.files("tadgame") / "scenarios" / f"{name}.toml"
    if res.is_file():
        return parse_scenario(res.read_text(), name)
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name!r}")
