"""Receding-horizon controller for the target-defender team.

Decision variables per horizon step: target velocity (u_x, u_y) and defender
turn rate.  The running cost is

    effort * |u|^2 + range * r + safe * max(0, e - R)

integrated with the rectangle rule at the post-step sample points.  The
attacker is forecast open-loop from the filter mean with the filter's own
motion model, so it does not depend on the plan and is computed once per solve.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numba import njit

from .engagement import AgentState, unicycle_rk4_increment, wrap_angle


class TargetMode(str, Enum):
    CONSTANT_SPEED = "constant_speed"
    VARIABLE_VELOCITY = "variable_velocity"


@dataclass(frozen=True)
class CostWeights:
    effort: float = 1.0
    range: float = 1.0
    safe: float = 1.0


@dataclass(frozen=True)
class NmpcConfig:
    horizon_steps: int = 6
    dt: float = 0.05
    v_T_max: float = 2.0
    alpha_dot_bounds: tuple[float, float] = (-0.5, 0.5)
    safe_distance_e: float = 0.0
    max_iters: int = 200
    conv_tol: float = 1e-6
    fd_step: float = 1e-4
    mode: TargetMode = TargetMode.VARIABLE_VELOCITY
    weights: CostWeights = field(default_factory=CostWeights)

    def __post_init__(self):
        lo, hi = self.alpha_dot_bounds
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo != -hi or hi <= 0:
            raise ValueError("alpha_dot_bounds must be finite, symmetric and non-empty")
        if self.v_T_max <= 0 or self.safe_distance_e < 0:
            raise ValueError("v_T_max must be positive and safe_distance_e non-negative")
        if self.horizon_steps < 1 or self.dt <= 0:
            raise ValueError("horizon_steps >= 1 and dt > 0 required")

    @property
    def horizon(self) -> float:
        return self.horizon_steps * self.dt


@dataclass(frozen=True)
class ControlInput:
    u_x: float
    u_y: float
    alpha_dot_D: float


@dataclass
class ControlPlan:
    controls: np.ndarray  # (horizon_steps, 3): u_x, u_y, alpha_dot_D
    cost: float = math.nan

    @classmethod
    def zeros(cls, cfg: NmpcConfig) -> "ControlPlan":
        return cls(np.zeros((cfg.horizon_steps, 3)))

    @classmethod
    def hold(cls, cfg: NmpcConfig, target: AgentState) -> "ControlPlan":
        """Plan that keeps the target's current velocity and the defender's heading."""
        c = np.zeros((cfg.horizon_steps, 3))
        c[:, 0] = target.v * math.cos(target.alpha)
        c[:, 1] = target.v * math.sin(target.alpha)
        return cls(c)

    @property
    def inputs(self) -> list[ControlInput]:
        return [ControlInput(*map(float, row)) for row in self.controls]

    @property
    def first(self) -> ControlInput:
        return ControlInput(*map(float, self.controls[0]))

    def shifted(self) -> "ControlPlan":
        c = np.vstack([self.controls[1:], self.controls[-1:]])
        return ControlPlan(c)


@dataclass(frozen=True)
class PredictedTrajectory:
    target: np.ndarray    # (H, 2) after each step
    defender: np.ndarray  # (H, 2)
    defender_heading: np.ndarray
    attacker: np.ndarray  # (H, 2)
    R: np.ndarray
    r: np.ndarray


def forecast_attacker(mean, v_A: float, dt: float, steps: int) -> np.ndarray:
    """Euler propagation of the filter mean; returns (steps, 4) post-step states."""
    x, y, alpha, a = (float(m) for m in mean)
    out = np.empty((steps, 4))
    for k in range(steps):
        turn = a / v_A if v_A != 0 else 0.0
        x, y, alpha, a = (x + v_A * math.cos(alpha) * dt, y + v_A * math.sin(alpha) * dt,
                          alpha + turn * dt, a - a * dt)
        out[k] = x, y, alpha, a
    return out


def _rollout(Z: np.ndarray, target_xy, defender: AgentState, dt: float):
    """Batched team rollout for plans Z of shape (B, H, 3)."""
    T = np.asarray(target_xy)[None, None, :] + dt * np.cumsum(Z[..., :2], axis=1)
    w = Z[..., 2]
    start = defender.alpha + dt * np.concatenate(
        [np.zeros((Z.shape[0], 1)), np.cumsum(w[:, :-1], axis=1)], axis=1)
    dx, dy = unicycle_rk4_increment(defender.v, start, w, dt)
    D = np.stack([defender.x + np.cumsum(dx, axis=1), defender.y + np.cumsum(dy, axis=1)], axis=-1)
    return T, D, start + w * dt


@njit(cache=True)
def _batch_cost(Z, tx, ty, dx0, dy0, alpha0, v_D, att, dt, w_e, w_r, w_s, e):
    # loop form of _rollout + stage cost; the hot path of the solver
    B, H = Z.shape[0], Z.shape[1]
    out = np.empty(B)
    k6 = v_D * dt / 6.0
    for b in range(B):
        x, y, px, py, a, acc = tx, ty, dx0, dy0, alpha0, 0.0
        for k in range(H):
            ux, uy, w = Z[b, k, 0], Z[b, k, 1], Z[b, k, 2]
            x += dt * ux
            y += dt * uy
            mid = a + 0.5 * w * dt
            end = a + w * dt
            px += k6 * (np.cos(a) + 4.0 * np.cos(mid) + np.cos(end))
            py += k6 * (np.sin(a) + 4.0 * np.sin(mid) + np.sin(end))
            a += dt * w
            R = np.hypot(x - att[k, 0], y - att[k, 1])
            r = np.hypot(px - att[k, 0], py - att[k, 1])
            acc += w_e * (ux * ux + uy * uy) + w_r * r + w_s * max(0.0, e - R)
        out[b] = dt * acc
    return out


class _Problem:
    def __init__(self, cfg: NmpcConfig, attacker_xy: np.ndarray, target: AgentState,
                 defender: AgentState):
        self.cfg = cfg
        self.attacker_xy = attacker_xy
        self.target = target
        self.defender = defender
        self.prev_heading = target.alpha

    def cost(self, Z: np.ndarray) -> np.ndarray:
        cfg, w, T, D = self.cfg, self.cfg.weights, self.target, self.defender
        return _batch_cost(np.ascontiguousarray(Z, dtype=np.float64), T.x, T.y, D.x, D.y,
                           D.alpha, D.v, self.attacker_xy, cfg.dt, w.effort, w.range, w.safe,
                           cfg.safe_distance_e)

    def project(self, Z: np.ndarray) -> np.ndarray:
        return project_controls(Z, self.cfg, self.prev_heading)

    def gradient(self, z: np.ndarray, h: float) -> np.ndarray:
        n = z.size
        E = (np.eye(n) * h).reshape(n, *z.shape)
        J = self.cost(np.concatenate([z + E, z - E]))
        return ((J[:n] - J[n:]) / (2.0 * h)).reshape(z.shape)


def project_controls(Z: np.ndarray, cfg: NmpcConfig, prev_heading: float = 0.0) -> np.ndarray:
    """Project plans (..., H, 3) onto the feasible set of ``cfg.mode``."""
    Z = np.array(Z, dtype=float, copy=True)
    squeeze = Z.ndim == 2
    if squeeze:
        Z = Z[None]
    lo, hi = cfg.alpha_dot_bounds
    Z[..., 2] = np.clip(Z[..., 2], lo, hi)
    u = Z[..., :2]
    n = np.hypot(u[..., 0], u[..., 1])
    vmax = cfg.v_T_max
    if cfg.mode is TargetMode.VARIABLE_VELOCITY:
        scale = np.where(n > vmax, vmax / np.where(n > 0, n, 1.0), 1.0)
        u *= scale[..., None]
    else:
        # a zero velocity keeps the most recent defined heading
        ang = np.arctan2(u[..., 1], u[..., 0])
        idx = np.where(n > 0, np.arange(Z.shape[1]), -1)
        idx = np.maximum.accumulate(idx, axis=1)
        heading = np.where(idx >= 0, np.take_along_axis(ang, np.maximum(idx, 0), axis=1),
                           float(prev_heading))
        u[..., 0] = vmax * np.cos(heading)
        u[..., 1] = vmax * np.sin(heading)
    return Z[0] if squeeze else Z


def target_mode_constraint(mode: TargetMode, plan: ControlPlan, v_T: float,
                           prev_heading: float = 0.0) -> ControlPlan:
    cfg = NmpcConfig(horizon_steps=len(plan.controls), v_T_max=v_T, mode=TargetMode(mode))
    c = plan.controls.copy()
    c[:, :2] = project_controls(plan.controls, cfg, prev_heading)[:, :2]
    return ControlPlan(c, plan.cost)


def predict_horizon(est_mean, v_A: float, target: AgentState, defender: AgentState,
                    plan: ControlPlan, cfg: NmpcConfig) -> PredictedTrajectory:
    if len(plan.controls) != cfg.horizon_steps:
        raise ValueError("plan length must equal horizon_steps")
    att = forecast_attacker(est_mean, v_A, cfg.dt, cfg.horizon_steps)[:, :2]
    T, D, hd = _rollout(plan.controls[None], (target.x, target.y), defender, cfg.dt)
    T, D = T[0], D[0]
    return PredictedTrajectory(
        target=T, defender=D, defender_heading=wrap_angle(hd[0]), attacker=att,
        R=np.hypot(*(T - att).T), r=np.hypot(*(D - att).T),
    )


def evaluate_cost(traj: PredictedTrajectory, plan: ControlPlan, cfg: NmpcConfig) -> float:
    w = cfg.weights
    u2 = plan.controls[:, 0] ** 2 + plan.controls[:, 1] ** 2
    stage = w.effort * u2 + w.range * traj.r + w.safe * np.maximum(0.0, cfg.safe_distance_e - traj.R)
    return float(cfg.dt * stage.sum())


@dataclass
class SolveStats:
    iterations: int = 0
    wall_time: float = 0.0


class NmpcSolver:
    """Projected-gradient solver with central finite-difference gradients.

    Each iteration moves the velocity block and the turn-rate block along
    their own normalized negative gradients (the turn-rate block diagonally
    rescaled).  Step lengths come from a halving ladder evaluated per block in
    one batch; the best step of each block is also tried jointly and the best
    feasible candidate wins.  A candidate is accepted only if it lowers the
    cost by more than ``conv_tol``, so the returned cost never exceeds that
    of the (projected) warm start.
    """

    def __init__(self, cfg: NmpcConfig, ladder: int = 20):
        self.cfg = cfg
        frac = 2.0 ** -np.arange(ladder)
        self._su = (2.0 * cfg.v_T_max * frac)[:, None, None]
        self._sw = (2.0 * cfg.alpha_dot_bounds[1] * frac)[:, None, None]
        # a turn rate steers every later sample, so its raw gradient grows
        # roughly with the square of the steps remaining; undo that lever
        remaining = np.arange(cfg.horizon_steps, 0, -1, dtype=float)
        self._turn_scale = remaining[0] ** 2 / remaining ** 2
        self.last_stats = SolveStats()

    def problem(self, est_mean, v_A: float, target: AgentState, defender: AgentState) -> _Problem:
        att = forecast_attacker(est_mean, v_A, self.cfg.dt, self.cfg.horizon_steps)[:, :2]
        return _Problem(self.cfg, att, target, defender)

    def solve(self, est_mean, v_A: float, target: AgentState, defender: AgentState,
              warm_start: ControlPlan | None = None) -> ControlPlan:
        t0 = time.perf_counter()
        cfg = self.cfg
        prob = self.problem(est_mean, v_A, target, defender)
        if warm_start is None:
            warm_start = ControlPlan.hold(cfg, target)
        z = prob.project(warm_start.controls)
        J = float(prob.cost(z[None])[0])
        it = 0
        while it < cfg.max_iters:
            it += 1
            g = prob.gradient(z, cfg.fd_step)
            gu = np.zeros_like(g)
            gw = np.zeros_like(g)
            gu[:, :2] = g[:, :2]
            gw[:, 2] = g[:, 2] * self._turn_scale
            nu, nw = np.linalg.norm(gu), np.linalg.norm(gw)
            if nu == 0 and nw == 0:
                break
            if nu > 0:
                gu /= nu
            if nw > 0:
                gw /= nw
            cand = prob.project(np.concatenate([z[None] - self._su * gu[None],
                                                z[None] - self._sw * gw[None]]))
            costs = prob.cost(cand)
            n = len(self._su)
            iu, iw = int(np.argmin(costs[:n])), n + int(np.argmin(costs[n:]))
            both = prob.project(z[None] - self._su[iu] * gu[None] - self._sw[iw - n] * gw[None])
            cand = np.concatenate([cand, both])
            costs = np.concatenate([costs, prob.cost(both)])
            best = int(np.argmin(costs))
            if not costs[best] < J - cfg.conv_tol:
                break
            z, J = cand[best], float(costs[best])
        self.last_stats = SolveStats(it, time.perf_counter() - t0)
        return ControlPlan(z, J)


def solve(est_mean, v_A: float, target: AgentState, defender: AgentState,
          warm_start: ControlPlan | None, cfg: NmpcConfig) -> ControlPlan:
    return NmpcSolver(cfg).solve(est_mean, v_A, target, defender, warm_start)


def apply_mode(cfg: NmpcConfig, mode: TargetMode) -> NmpcConfig:
    return replace(cfg, mode=TargetMode(mode))
