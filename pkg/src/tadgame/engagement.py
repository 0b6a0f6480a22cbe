"""Planar point-mass kinematics and the three-agent relative geometry.

Attacker and defender are unicycles (constant speed, commanded turn rate).
The target is driven directly by its velocity components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CommandOutOfBounds

SPEED_TOL = 1e-9


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    # in-range values pass through untouched so that wrap(-a) == -wrap(a) exactly
    if isinstance(angle, np.ndarray):
        inside = (angle > -np.pi) & (angle <= np.pi)
        return np.where(inside, angle, np.pi - np.mod(np.pi - angle, 2.0 * np.pi))
    if -math.pi < angle <= math.pi:
        return angle
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    alpha: float = 0.0
    v: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class EngagementState:
    t: float
    target: AgentState
    attacker: AgentState
    defender: AgentState


@dataclass(frozen=True)
class RelativeGeometry:
    R: float
    theta: float
    r: float
    xi: float
    vR: float
    vTheta: float
    vr: float
    vXi: float


def _los(dx: float, dy: float) -> tuple[float, float]:
    rng = math.hypot(dx, dy)
    return rng, (math.atan2(dy, dx) if rng > 0.0 else 0.0)


def relative_geometry(state: EngagementState) -> RelativeGeometry:
    T, A, D = state.target, state.attacker, state.defender
    R, theta = _los(T.x - A.x, T.y - A.y)
    r, xi = _los(D.x - A.x, D.y - A.y)
    return RelativeGeometry(
        R=R,
        theta=theta,
        r=r,
        xi=xi,
        vR=T.v * math.cos(T.alpha - theta) - A.v * math.cos(A.alpha - theta),
        vTheta=T.v * math.sin(T.alpha - theta) - A.v * math.sin(A.alpha - theta),
        vr=D.v * math.cos(D.alpha - xi) - A.v * math.cos(A.alpha - xi),
        vXi=D.v * math.sin(D.alpha - xi) - A.v * math.sin(A.alpha - xi),
    )


def unicycle_rk4_increment(v, alpha, turn_rate, dt):
    """Position increment of one RK4 step of x' = v cos a, y' = v sin a, a' = w.

    Works elementwise on arrays. Heading is linear in time under a constant
    turn rate, so the two midpoint stages share one heading.
    """
    mid = alpha + 0.5 * turn_rate * dt
    end = alpha + turn_rate * dt
    c = np.cos(alpha) + 4.0 * np.cos(mid) + np.cos(end)
    s = np.sin(alpha) + 4.0 * np.sin(mid) + np.sin(end)
    k = v * dt / 6.0
    return k * c, k * s


def step_agent(agent: AgentState, turn_rate: float, dt: float) -> AgentState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    dx, dy = unicycle_rk4_increment(agent.v, agent.alpha, turn_rate, dt)
    return replace(
        agent,
        x=agent.x + float(dx),
        y=agent.y + float(dy),
        alpha=wrap_angle(agent.alpha + turn_rate * dt),
    )


def step_target(target: AgentState, u_x: float, u_y: float, dt: float,
                v_max: float | None = None) -> AgentState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    speed = math.hypot(u_x, u_y)
    if v_max is not None and speed > v_max + SPEED_TOL:
        raise CommandOutOfBounds(f"target speed {speed:.6g} exceeds bound {v_max:.6g}")
    heading = math.atan2(u_y, u_x) if speed > 0.0 else target.alpha
    return AgentState(x=target.x + u_x * dt, y=target.y + u_y * dt, alpha=heading, v=speed)
