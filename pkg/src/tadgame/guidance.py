"""Attacker guidance (switched PP/PN) and line-of-sight baselines for the defender.

All laws return a lateral acceleration; the heading rate applied to the
agent is ``accel / speed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .engagement import EngagementState, relative_geometry, wrap_angle
from .errors import DegenerateLOS, LOSRateUndefined


@dataclass(frozen=True)
class GuidanceConfig:
    kappa: float = 2.0
    nav_constant: float = 3.0
    switch_period: float = 1.0
    clos_kp: float = 10.0
    clos_kd: float = 5.0

    def __post_init__(self):
        if self.kappa <= 0 or self.nav_constant <= 0 or self.switch_period <= 0:
            raise ValueError("kappa, nav_constant and switch_period must be positive")


def pp_accel(alpha_A: float, theta: float, kappa: float) -> float:
    return -kappa * wrap_angle(alpha_A - theta)


def pn_accel(v_A: float, theta_dot: float, N: float) -> float:
    return N * v_A * theta_dot


def los_rate(state: EngagementState, capture_radius: float = 1.0) -> float:
    geom = relative_geometry(state)
    if geom.R < capture_radius:
        raise LOSRateUndefined(f"R={geom.R:.3g} m is inside the capture radius")
    return geom.vTheta / geom.R


def uses_pure_pursuit(t: float, switch_period: float = 1.0) -> bool:
    # interval [k*T, (k+1)*T) flies PP for even k
    return math.floor(t / switch_period + 1e-12) % 2 == 0


def switched_attacker_accel(t: float, state: EngagementState, cfg: GuidanceConfig,
                            capture_radius: float = 1.0) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    A = state.attacker
    if uses_pure_pursuit(t, cfg.switch_period):
        return pp_accel(A.alpha, relative_geometry(state).theta, cfg.kappa)
    return pn_accel(A.v, los_rate(state, capture_radius), cfg.nav_constant)


def line_offset(state: EngagementState) -> tuple[float, float, float]:
    """Signed distance of the defender from the target->attacker line.

    Returns ``(d, along, lam)``: ``d`` positive to the left of the line,
    ``along`` the defender's projection along it and ``lam`` the line angle.
    """
    T, A, D = state.target, state.attacker, state.defender
    lx, ly = A.x - T.x, A.y - T.y
    n = math.hypot(lx, ly)
    if n < 1e-9:
        raise DegenerateLOS("target and attacker coincide")
    ex, ey = lx / n, ly / n
    dx, dy = D.x - T.x, D.y - T.y
    return ex * dy - ey * dx, ex * dx + ey * dy, math.atan2(ly, lx)


class ClosTracker:
    """Finite-difference memory for one run of a CLOS-family defender."""

    def __init__(self, turn_rate_limit: float = 0.5):
        self.turn_rate_limit = turn_rate_limit
        self._prev: tuple[float, float, float, float] | None = None
        self._lam_rate: float | None = None

    def rates(self, state: EngagementState) -> tuple[float, ...]:
        d, along, lam = line_offset(state)
        d_dot = along_dot = lam_dot = lam_ddot = 0.0
        if self._prev is not None:
            t0, d0, along0, lam0 = self._prev
            h = state.t - t0
            if h > 0:
                d_dot = (d - d0) / h
                along_dot = (along - along0) / h
                lam_dot = wrap_angle(lam - lam0) / h
                if self._lam_rate is not None:
                    lam_ddot = (lam_dot - self._lam_rate) / h
                self._lam_rate = lam_dot
        self._prev = (state.t, d, along, lam)
        return d, d_dot, along, along_dot, lam_dot, lam_ddot

    def saturate(self, accel: float, v_D: float) -> float:
        cap = v_D * self.turn_rate_limit
        return max(-cap, min(cap, accel))


def clos_accel(state: EngagementState, cfg: GuidanceConfig, tracker: ClosTracker) -> float:
    d, d_dot, *_ = tracker.rates(state)
    return tracker.saturate(-(cfg.clos_kp * d + cfg.clos_kd * d_dot), state.defender.v)


def aclos_accel(state: EngagementState, cfg: GuidanceConfig, tracker: ClosTracker) -> float:
    d, d_dot, along, along_dot, lam_dot, lam_ddot = tracker.rates(state)
    # lateral acceleration of the point riding the rotating line at the defender's range
    feedforward = along * lam_ddot + 2.0 * along_dot * lam_dot
    return tracker.saturate(feedforward - (cfg.clos_kp * d + cfg.clos_kd * d_dot),
                            state.defender.v)
