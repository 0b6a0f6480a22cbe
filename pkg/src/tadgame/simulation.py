"""Closed-loop driver: measure, estimate, control, guide, integrate, check events."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .config import Controller, ScenarioConfig
from .engagement import EngagementState, relative_geometry, step_agent, step_target
from .errors import NoEvent, SimulationError, TadError
from .estimator import (EstimatorState, ekf_predict, ekf_update, initialize_estimate,
                        simulate_measurement)
from .guidance import ClosTracker, aclos_accel, clos_accel, switched_attacker_accel
from .nmpc import ControlPlan, NmpcSolver

COLUMNS = ("t", "x_T", "y_T", "x_A", "y_A", "x_D", "y_D", "u_x", "u_y", "alpha_dot_D", "a_A",
           "R", "r", "est_x_A", "est_y_A", "est_alpha_A", "est_a_A",
           "sigma_x", "sigma_y", "sigma_alpha", "sigma_a")


class Outcome(str, Enum):
    TARGET_CAPTURED = "TargetCaptured"
    ATTACKER_INTERCEPTED = "AttackerIntercepted"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class MetricsRecord:
    interception_time: float
    avg_control_effort_defender: float
    avg_control_effort_combined: float
    avg_solver_time_per_iteration: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SimResult:
    outcome: Outcome
    event_time: float
    trajectory: np.ndarray              # (steps + 1, len(COLUMNS))
    dt: float
    solver_times: np.ndarray
    true_attacker: np.ndarray           # (steps + 1, 4): x, y, alpha, a of the real attacker
    v_D: float = 0.0
    metrics: MetricsRecord | None = None
    final_state: EngagementState | None = None

    def column(self, name: str) -> np.ndarray:
        return self.trajectory[:, COLUMNS.index(name)]

    @property
    def steps(self) -> int:
        return len(self.trajectory) - 1


def first_contact(p0, p1, radius: float) -> float | None:
    """Earliest s in [0, 1] with |p0 + s (p1 - p0)| <= radius, or None.

    ``p0``/``p1`` are relative positions at the start and end of a step; the
    linear interpolation also catches agents that pass through each other
    between samples.
    """
    p0 = np.asarray(p0, float)
    d = np.asarray(p1, float) - p0
    c = p0 @ p0 - radius * radius
    if c <= 0:
        return 0.0
    a, b = d @ d, 2.0 * (p0 @ d)
    if a == 0.0:
        return None
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    s = (-b - math.sqrt(disc)) / (2 * a)
    return s if 0.0 <= s <= 1.0 else None


def _rel(a, b):
    return (a.x - b.x, a.y - b.y)


def run_simulation(cfg: ScenarioConfig, seed: int | None = None) -> SimResult:
    """One engagement. ``seed`` overrides the scenario's RNG seed."""
    dt = cfg.dt
    ncfg = cfg.nmpc_config()
    gcfg = cfg.guidance_config()
    noise = cfg.noise_config(seed)
    rng = np.random.default_rng(noise.seed)
    R_c, r_c = cfg.capture.R_c, cfg.capture.r_c
    v_A, v_D, v_T_max = cfg.attacker.speed, cfg.defender.speed, cfg.target.max_speed
    w_max = cfg.nmpc.alpha_dot_max
    n_steps = int(math.ceil(cfg.duration / dt - 1e-9))

    solver = NmpcSolver(ncfg) if cfg.controller is Controller.NMPC else None
    tracker = ClosTracker(turn_rate_limit=w_max)
    law = aclos_accel if cfg.controller is Controller.ACLOS else clos_accel

    state = cfg.initial_state()
    plan: ControlPlan | None = None
    est: EstimatorState | None = None
    a_true = 0.0
    rows, truth, times = [], [], []
    outcome, event_time = Outcome.TIMEOUT, n_steps * dt

    def log(st, u, a_cmd, e):
        g = relative_geometry(st)
        T, A, D = st.target, st.attacker, st.defender
        rows.append((st.t, T.x, T.y, A.x, A.y, D.x, D.y, u[0], u[1], u[2], a_cmd, g.R, g.r,
                     *e.mean, *e.sigma))
        truth.append((A.x, A.y, A.alpha, a_cmd))

    g0 = relative_geometry(state)
    if g0.r <= r_c or g0.R <= R_c:
        outcome = Outcome.ATTACKER_INTERCEPTED if g0.r <= r_c else Outcome.TARGET_CAPTURED
        n_steps, event_time = 0, 0.0

    for k in range(n_steps):
        t = k * dt
        state = EngagementState(t, state.target, state.attacker, state.defender)
        T, A, D = state.target, state.attacker, state.defender
        try:
            z = simulate_measurement(state, noise.Sigma, rng)
            if est is None:
                est = initialize_estimate(z, (T.x, T.y))
            else:
                est = ekf_predict(est, dt, v_A, noise.Q)
                est = ekf_update(est, z, (T.x, T.y), (D.x, D.y), noise.Sigma)

            t0 = time.perf_counter()
            if solver is not None:
                plan = solver.solve(est.mean, v_A, T, D, plan.shifted() if plan else None)
                u_x, u_y, w = plan.first.u_x, plan.first.u_y, plan.first.alpha_dot_D
            else:
                u_x, u_y = T.v * math.cos(T.alpha), T.v * math.sin(T.alpha)
                seen = state if cfg.baseline_truth else EngagementState(
                    t, T, replace(A, x=float(est.mean[0]), y=float(est.mean[1])), D)
                w = law(seen, gcfg, tracker) / v_D
            times.append(time.perf_counter() - t0)

            a_true = switched_attacker_accel(t, state, gcfg, R_c)
            log(state, (u_x, u_y, w), a_true, est)

            nxt = EngagementState(
                t + dt,
                step_target(T, u_x, u_y, dt, v_T_max),
                step_agent(A, a_true / v_A, dt),
                step_agent(D, w, dt),
            )
        except TadError as exc:
            raise SimulationError(k, exc) from exc

        s_R = first_contact(_rel(T, A), _rel(nxt.target, nxt.attacker), R_c)
        s_r = first_contact(_rel(D, A), _rel(nxt.defender, nxt.attacker), r_c)
        state = nxt
        if s_R is not None or s_r is not None:
            # the defender wins ties: it must only reach the attacker no later than the attacker reaches the target
            if s_r is not None and (s_R is None or s_r <= s_R):
                outcome, event_time = Outcome.ATTACKER_INTERCEPTED, t + s_r * dt
            else:
                outcome, event_time = Outcome.TARGET_CAPTURED, t + s_R * dt
            break

    log(state, (0.0, 0.0, 0.0), 0.0, est if est is not None else _dummy_estimate(state))
    result = SimResult(outcome, event_time, np.array(rows, dtype=float), dt,
                       np.array(times, dtype=float), np.array(truth, dtype=float),
                       v_D=v_D, final_state=state)
    result.metrics = compute_metrics(result, require_event=False)
    _check_bounds(result, v_T_max, w_max)
    return result


def _dummy_estimate(state: EngagementState) -> EstimatorState:
    A = state.attacker
    return EstimatorState(np.array([A.x, A.y, A.alpha, 0.0]), np.zeros((4, 4)))


def _check_bounds(result: SimResult, v_max: float, w_max: float) -> None:
    u = np.hypot(result.column("u_x"), result.column("u_y"))
    w = np.abs(result.column("alpha_dot_D"))
    if np.any(u > v_max + 1e-9) or np.any(w > w_max + 1e-9):
        raise SimulationError(result.steps, ValueError("logged control outside its bounds"))


def compute_metrics(result: SimResult, require_event: bool = True) -> MetricsRecord:
    if result.outcome is Outcome.TIMEOUT and require_event:
        raise NoEvent("the run timed out, there is no interception time")
    traj = result.trajectory[:-1]
    if len(traj) == 0:
        return MetricsRecord(result.event_time, 0.0, 0.0, 0.0)
    cols = {c: traj[:, i] for i, c in enumerate(COLUMNS)}
    lat_D = np.abs(result.v_D * cols["alpha_dot_D"])
    u = np.stack([cols["u_x"], cols["u_y"]], axis=1)
    # target acceleration from consecutive velocity commands (starting from the logged initial velocity)
    du = np.diff(np.vstack([u[:1], u]), axis=0) / result.dt
    combined = lat_D + np.hypot(du[:, 0], du[:, 1])
    solver = float(result.solver_times.mean()) if len(result.solver_times) else 0.0
    return MetricsRecord(
        interception_time=float(result.event_time),
        avg_control_effort_defender=float(lat_D.mean()),
        avg_control_effort_combined=float(combined.mean()),
        avg_solver_time_per_iteration=solver,
    )


@dataclass
class ComparisonRow:
    controller: str
    outcome: str | None
    metrics: MetricsRecord | None
    error: str | None = None


def compare(cfg: ScenarioConfig, controllers: list[str | Controller],
            seed: int | None = None) -> list[ComparisonRow]:
    """Run the same scenario (same seed) once per defender controller."""
    if len(controllers) < 2:
        raise ValueError("compare needs at least two controllers")
    rows = []
    for c in controllers:
        name = getattr(c, "value", str(c))
        try:
            name = Controller(c).value
            res = run_simulation(cfg.with_updates(controller=name), seed=seed)
            rows.append(ComparisonRow(name, res.outcome.value, res.metrics))
        except Exception as exc:  # one bad row must not sink the table
            rows.append(ComparisonRow(name, None, None, f"{type(exc).__name__}: {exc}"))
    return rows


@dataclass
class SweepCell:
    x: float
    y: float
    predicted: str
    simulated: str | None
    event_time: float | None = None
    near_boundary: bool = False
    error: str | None = None

    @property
    def agrees(self) -> bool:
        return self.simulated is not None and self.simulated == self.predicted


@dataclass
class SweepReport:
    cells: list[SweepCell]
    agreement: float            # fraction of off-band cells that agree (nan when none)
    evaluated: int              # off-band cells counted in ``agreement``
    wall_time: float

    def as_dict(self) -> dict:
        return {"agreement": self.agreement, "evaluated": self.evaluated,
                "wall_time": self.wall_time, "cells": [c.__dict__ for c in self.cells]}


def _sim_label(outcome: Outcome) -> str:
    return {Outcome.ATTACKER_INTERCEPTED: "escape", Outcome.TARGET_CAPTURED: "capture"}.get(
        outcome, "timeout")


def _boundary_band(labels: np.ndarray) -> np.ndarray:
    """Cells whose label differs from any 8-neighbour, or that are Boundary themselves."""
    esc = np.array([[lab == "escape" for lab in row] for row in labels], dtype=bool)
    band = np.array([[lab == "boundary" for lab in row] for row in labels], dtype=bool)
    ny, nx = esc.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            shifted = np.full_like(esc, False)
            src = esc[max(0, -dy):ny - max(0, dy), max(0, -dx):nx - max(0, dx)]
            shifted_view = esc[max(0, dy):ny - max(0, -dy), max(0, dx):nx - max(0, -dx)]
            diff = src != shifted_view
            shifted[max(0, dy):ny - max(0, -dy), max(0, dx):nx - max(0, -dx)] = diff
            band |= shifted
    return band


def sweep_scenario(template: ScenarioConfig, p, target_pos) -> ScenarioConfig:
    """Place the template's agents in the canonical frame for one target cell.

    Attacker at (x_A, 0) heading at the target, defender at (-x_A, 0) heading at
    the attacker.  The target heads for the point of its Apollonius circle
    (with respect to the attacker) furthest towards the defender and, with no
    safe distance set, keeps that heading.
    """
    from .zones import apollonius_circle

    tx, ty = target_pos
    v_T = template.target.max_speed
    circle = apollonius_circle((tx, ty), (p.x_A, 0.0), p.gamma_AT)
    aim = (circle.center[0] - circle.radius, circle.center[1])
    heading = math.atan2(aim[1] - ty, aim[0] - tx) if circle.radius > 0 else math.pi
    return template.with_updates(**{
        "target.position": [tx, ty], "target.heading": heading, "target.speed": v_T,
        "attacker.position": [p.x_A, 0.0],
        "attacker.heading": math.atan2(ty, tx - p.x_A),
        "defender.position": [-p.x_A, 0.0], "defender.heading": 0.0,
        "safe_distance": {"e": 0.0},
    })


def sweep_zone_validation(p, grid, template: ScenarioConfig, mode="cs",
                          master_seed: int | None = None, progress=None) -> SweepReport:
    """Closed-loop outcome versus predicted zone label for every grid cell."""
    from .zones import build_zone_map

    t0 = time.perf_counter()
    zmap = build_zone_map(p, grid, mode)
    labels = np.vectorize(lambda lab: lab.value, otypes=[object])(zmap.labels) \
        if zmap.labels.size else zmap.labels
    band = _boundary_band(labels) if zmap.labels.size else np.zeros((0, 0), bool)
    xs, ys = grid.centers()
    ss = np.random.SeedSequence(template.seed if master_seed is None else master_seed)
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(grid.nx * grid.ny)]
    cells = []
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            cell = SweepCell(float(x), float(y), labels[iy, ix], None,
                             near_boundary=bool(band[iy, ix]))
            try:
                res = run_simulation(sweep_scenario(template, p, (float(x), float(y))),
                                     seed=seeds[iy * grid.nx + ix])
                cell.simulated, cell.event_time = _sim_label(res.outcome), res.event_time
            except Exception as exc:
                cell.error = f"{type(exc).__name__}: {exc}"
            cells.append(cell)
            if progress is not None:
                progress(cell)
    counted = [c for c in cells if not c.near_boundary]
    agreement = (sum(c.agrees for c in counted) / len(counted)) if counted else math.nan
    return SweepReport(cells, agreement, len(counted), time.perf_counter() - t0)


def zone_params_for(cfg: ScenarioConfig):
    """Canonical-frame zone parameters implied by a scenario's agents and speeds."""
    from .zones import ZoneParams

    (ax, ay), (dx, dy) = cfg.attacker.position, cfg.defender.position
    return ZoneParams(x_A=0.5 * math.hypot(ax - dx, ay - dy),
                      gamma_AT=cfg.target.max_speed / cfg.attacker.speed,
                      gamma_AD=cfg.defender.speed / cfg.attacker.speed)


def default_sweep_grid(x_A: float, n: int):
    """n x n cells over x in [-16/7, 26/7] x_A, y in [-3, 3] x_A (10 m cells at x_A = 35, n = 21)."""
    from .zones import GridSpec

    return GridSpec(-16 / 7 * x_A, 26 / 7 * x_A, -3 * x_A, 3 * x_A, n, n)
