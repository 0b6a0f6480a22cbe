"""Extended Kalman filter for the attacker state [x_A, y_A, alpha_A, a_A].

The target-defender team measures the ranges R, r and the line-of-sight
angles theta, xi to the attacker from their own (known) positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engagement import EngagementState, relative_geometry, wrap_angle
from .errors import SingularGeometry, SingularInnovationCov

PAPER_Q = np.diag([0.1, 0.1, 0.01, 0.1])
PAPER_SIGMA = np.diag([0.1, 0.1, 0.01, 0.01])
INITIAL_COV = np.diag([10.0, 10.0, 1.0, 1.0])

MAX_CONDITION = 1e12
MIN_RANGE = 1e-9


@dataclass(frozen=True)
class EstimatorState:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


@dataclass(frozen=True)
class Measurement:
    R: float
    r: float
    theta: float
    xi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.R, self.r, self.theta, self.xi])


@dataclass(frozen=True)
class NoiseConfig:
    Q: np.ndarray = field(default_factory=lambda: PAPER_Q.copy())
    Sigma: np.ndarray = field(default_factory=lambda: PAPER_SIGMA.copy())
    seed: int = 0


def attacker_dynamics(mean: np.ndarray, v_A: float) -> np.ndarray:
    _, _, alpha, a = mean
    turn = a / v_A if v_A != 0 else 0.0
    return np.array([v_A * math.cos(alpha), v_A * math.sin(alpha), turn, -a])


def dynamics_jacobian(mean: np.ndarray, v_A: float) -> np.ndarray:
    alpha = mean[2]
    return np.array([
        [0.0, 0.0, -v_A * math.sin(alpha), 0.0],
        [0.0, 0.0, v_A * math.cos(alpha), 0.0],
        [0.0, 0.0, 0.0, 1.0 / v_A],
        [0.0, 0.0, 0.0, -1.0],
    ])


def measurement_model(mean: np.ndarray, target_pos, defender_pos) -> np.ndarray:
    xa, ya = mean[0], mean[1]
    tx, ty = target_pos[0] - xa, target_pos[1] - ya
    dx, dy = defender_pos[0] - xa, defender_pos[1] - ya
    return np.array([math.hypot(tx, ty), math.hypot(dx, dy),
                     math.atan2(ty, tx), math.atan2(dy, dx)])


def measurement_jacobian(mean: np.ndarray, target_pos, defender_pos) -> np.ndarray:
    xa, ya = mean[0], mean[1]
    tx, ty = target_pos[0] - xa, target_pos[1] - ya
    dx, dy = defender_pos[0] - xa, defender_pos[1] - ya
    R2, r2 = tx * tx + ty * ty, dx * dx + dy * dy
    R, r = math.sqrt(R2), math.sqrt(r2)
    if R < MIN_RANGE or r < MIN_RANGE:
        raise SingularGeometry("predicted attacker coincides with the target or defender")
    return np.array([
        [-tx / R, -ty / R, 0.0, 0.0],
        [-dx / r, -dy / r, 0.0, 0.0],
        [ty / R2, -tx / R2, 0.0, 0.0],
        [dy / r2, -dx / r2, 0.0, 0.0],
    ])


def ekf_predict(est: EstimatorState, dt: float, v_A: float, Q: np.ndarray) -> EstimatorState:
    if dt <= 0 or v_A <= 0:
        raise ValueError("dt and v_A must be positive")
    mean = est.mean + attacker_dynamics(est.mean, v_A) * dt
    mean[2] = wrap_angle(mean[2])
    # discrete transition; the continuous Jacobian alone would zero the position variance
    F = np.eye(4) + dynamics_jacobian(est.mean, v_A) * dt
    cov = F @ est.cov @ F.T + Q
    return EstimatorState(mean, 0.5 * (cov + cov.T))


def innovation(z: Measurement, predicted: np.ndarray) -> np.ndarray:
    nu = z.as_array() - predicted
    nu[2:] = wrap_angle(nu[2:])
    return nu


def ekf_update(est: EstimatorState, z: Measurement, target_pos, defender_pos,
               Sigma: np.ndarray) -> EstimatorState:
    H = measurement_jacobian(est.mean, target_pos, defender_pos)
    nu = innovation(z, measurement_model(est.mean, target_pos, defender_pos))
    P = est.cov
    S = H @ P @ H.T + Sigma
    if np.linalg.cond(S) > MAX_CONDITION:
        raise SingularInnovationCov("innovation covariance is numerically singular")
    K = np.linalg.solve(S, H @ P).T  # P H' S^-1, S symmetric
    mean = est.mean + K @ nu
    mean[2] = wrap_angle(mean[2])
    cov = P - K @ S @ K.T
    return EstimatorState(mean, 0.5 * (cov + cov.T))


def _sqrt_cov(Sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        # semidefinite (e.g. a noiseless channel)
        w, V = np.linalg.eigh(Sigma)
        return V * np.sqrt(np.clip(w, 0.0, None))


def simulate_measurement(true_state: EngagementState, Sigma: np.ndarray,
                         rng: np.random.Generator) -> Measurement:
    g = relative_geometry(true_state)
    noise = _sqrt_cov(Sigma) @ rng.standard_normal(4)
    return Measurement(
        R=max(0.0, g.R + noise[0]),
        r=max(0.0, g.r + noise[1]),
        theta=wrap_angle(g.theta + noise[2]),
        xi=wrap_angle(g.xi + noise[3]),
    )


def initialize_estimate(z: Measurement, target_pos, cov: np.ndarray = INITIAL_COV) -> EstimatorState:
    """Place the attacker at the measured range/bearing from the target."""
    mean = np.array([
        target_pos[0] - z.R * math.cos(z.theta),
        target_pos[1] - z.R * math.sin(z.theta),
        0.0,
        0.0,
    ])
    return EstimatorState(mean, np.array(cov, dtype=float))
