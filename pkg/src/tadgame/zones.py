"""Escape and capture zones from Apollonius-circle geometry.

Canonical frame: attacker at (x_A, 0), defender at (-x_A, 0), the y-axis is
the perpendicular bisector of the attacker-defender segment.  A target
position escapes when the defender can intercept the attacker before the
attacker reaches the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DegenerateRatio, NonConvergent

BOUNDARY_TOL = 1e-9


class Label(str, Enum):
    ESCAPE = "escape"
    CAPTURE = "capture"
    BOUNDARY = "boundary"


class ZoneMode(str, Enum):
    CONSTANT_SPEED = "cs"
    STATIONARY = "stationary"
    VARIABLE_VELOCITY = "vv"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class ApolloniusCircle:
    center: tuple[float, float]
    radius: float
    speed_ratio: float


@dataclass(frozen=True)
class ZoneParams:
    x_A: float = 0.5
    gamma_AT: float = 0.5
    gamma_AD: float = 1.0
    e_fraction: float = 0.5      # safe distance as a fraction of the initial A-T range
    sigma_pos: float = 0.0
    capture_radius: float | None = None   # defaults to 2 % of x_A
    pre_phase_dt: float = 1e-3
    pre_phase_max_time: float = 50.0
    defender_policy: str = "intercept"    # or "pursuit"

    def __post_init__(self):
        if not 0.0 < self.gamma_AT < 1.0:
            raise ValueError("gamma_AT must lie in (0, 1)")
        if self.gamma_AD <= 0 or self.x_A <= 0:
            raise ValueError("gamma_AD and x_A must be positive")
        if self.sigma_pos < 0 or not 0.0 <= self.e_fraction <= 1.0:
            raise ValueError("sigma_pos must be >= 0 and e_fraction in [0, 1]")
        if self.defender_policy not in ("intercept", "pursuit"):
            raise ValueError("defender_policy must be 'intercept' or 'pursuit'")

    @property
    def r_capture(self) -> float:
        return self.capture_radius if self.capture_radius is not None else 0.02 * self.x_A

    @property
    def equal_speed(self) -> bool:
        return abs(self.gamma_AD - 1.0) < 1e-12


def apollonius_circle(evader_pos, pursuer_pos, gamma: float) -> ApolloniusCircle:
    """Locus of points the evader (speed ratio ``gamma`` to the pursuer) reaches
    at the same time as the pursuer: |P - evader| / |P - pursuer| = gamma."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if abs(gamma - 1.0) < 1e-12:
        raise DegenerateRatio("equal speeds: the locus is the perpendicular bisector")
    ex, ey = evader_pos
    px, py = pursuer_pos
    k = 1.0 - gamma * gamma
    center = ((ex - gamma * gamma * px) / k, (ey - gamma * gamma * py) / k)
    radius = gamma * math.hypot(ex - px, ey - py) / abs(k)
    return ApolloniusCircle(center, radius, gamma)


def _canonical_circles(target_pos, p: ZoneParams):
    at = apollonius_circle(target_pos, (p.x_A, 0.0), p.gamma_AT)
    ad = apollonius_circle((-p.x_A, 0.0), (p.x_A, 0.0), p.gamma_AD)
    return at, ad


def escape_margin(target_pos, p: ZoneParams) -> float:
    """Signed distance-like margin in the canonical frame, positive means escape.

    Equal speeds: how far the A-T circle reaches past the y-axis.  Otherwise
    the overlap of the A-T circle with the defender's dominance region.
    """
    if p.equal_speed:
        at = apollonius_circle(target_pos, (p.x_A, 0.0), p.gamma_AT)
        return at.radius - at.center[0]
    at, ad = _canonical_circles(target_pos, p)
    d_c = math.hypot(at.center[0] - ad.center[0], at.center[1] - ad.center[1])
    if p.gamma_AD < 1.0:
        return ad.radius + at.radius - d_c       # circles overlap
    return d_c + at.radius - ad.radius           # A-T circle pokes out of the A-D circle


def hyperbola_lhs(target_pos, p: ZoneParams) -> float:
    """Left side of the equal-speed escape inequality (escape when > 1)."""
    x, y = target_pos
    g = p.gamma_AT
    return p.x_A ** 2 / (x / g) ** 2 + y ** 2 / ((math.sqrt(1 - g * g) / g * x) ** 2)


def classify_constant_speed(target_pos, p: ZoneParams) -> Label:
    if p.equal_speed:
        x, _ = target_pos
        if x <= 0:
            return Label.ESCAPE
        m = hyperbola_lhs(target_pos, p) - 1.0
    else:
        at, ad = _canonical_circles(target_pos, p)
        m = escape_margin(target_pos, p) / max(1.0, ad.radius + at.radius)
    if abs(m) < BOUNDARY_TOL:
        return Label.BOUNDARY
    return Label.ESCAPE if m > 0 else Label.CAPTURE


def boundary_equal_speed(p: ZoneParams, x: float) -> float | None:
    g, xa = p.gamma_AT, p.x_A
    if x < g * xa:
        return None
    return xa * math.sqrt(1 - g * g) * math.sqrt(max(0.0, x * x / (g * g * xa * xa) - 1.0))


def quartic_coefficients(p: ZoneParams) -> tuple[float, float, float, float, float]:
    """c0..c4 of the tangency quartic (c3 y^2 + c2 x^2 + c4 x + c0)^2 = c1^2 |T - A|^2."""
    gt, gd, xa = p.gamma_AT, p.gamma_AD, p.x_A
    t2, d2 = gt * gt, gd * gd
    c0 = xa * xa * (1 - 2 * d2 + d2 * d2 - 5 * t2 + 8 * t2 * d2 - d2 * d2 * t2
                    + 4 * t2 * t2 - 4 * t2 * t2 * d2 - 2 * d2 * t2)
    c1 = xa * (-4 * gt * gd + 4 * t2 * gt * gd + 4 * gt * d2 * gd - 4 * d2 * gd * t2 * gt)
    c2 = 1 - t2 - 2 * d2 + 2 * d2 * t2 + d2 * d2 - d2 * d2 * t2
    c3 = c2
    c4 = xa * (2 - 2 * t2 - 2 * d2 * d2 + 2 * t2 * d2 * d2)
    return c0, c1, c2, c3, c4


def quartic_in_y2(p: ZoneParams, x: float) -> tuple[float, float, float]:
    """(a, b, c) with a*Y^2 + b*Y + c = 0 for Y = y^2 at abscissa x."""
    c0, c1, c2, c3, c4 = quartic_coefficients(p)
    # all coefficients share (1 - gd^2)(1 - gt^2); dividing it out keeps the
    # near-equal-speed case well conditioned without moving the roots
    k = (1 - p.gamma_AD ** 2) * (1 - p.gamma_AT ** 2)
    c0, c1, c2, c3, c4 = (c / k for c in (c0, c1, c2, c3, c4))
    xa = p.x_A
    a = c3 * c3
    b = 2 * c2 * c3 * x * x + 2 * c3 * c4 * x + 2 * c3 * c0 - c1 * c1
    c = (c2 * c2 * x ** 4 + c4 * c4 * x * x + c0 * c0 + 2 * c4 * c0 * x + 2 * c2 * c4 * x ** 3
         + 2 * c2 * c0 * x * x - c1 * c1 * x * x + 2 * c1 * c1 * xa * x - c1 * c1 * xa * xa)
    return a, b, c


def _quadratic_roots(a: float, b: float, c: float) -> tuple[float, float] | None:
    """(larger, smaller) real roots, or None when the discriminant is negative."""
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    if b <= 0:
        q = -b + sq
        hi = q / (2 * a)
        lo = (2 * c / q) if q != 0 else hi
    else:
        q = -b - sq
        lo = q / (2 * a)
        hi = 2 * c / q
    return hi, lo


def _tangency_residual(p: ZoneParams, x: float, y2: float) -> float:
    """Relative miss of the tangency this speed ratio needs: outer for a slower
    defender, inner for a faster one."""
    at, ad = _canonical_circles((x, math.sqrt(y2)), p)
    d_c = math.hypot(at.center[0] - ad.center[0], at.center[1] - ad.center[1])
    want = ad.radius + at.radius if p.gamma_AD < 1 else abs(ad.radius - at.radius)
    return abs(d_c - want) / max(1.0, ad.radius + at.radius)


def quartic_boundary(p: ZoneParams, x: float, tol: float = 1e-6) -> list[float]:
    """Boundary y^2 values at abscissa x for unequal attacker-defender speeds.

    Squaring merges the outer and inner tangency conditions into one quartic,
    and which of its two y^2 roots is which depends on the speed ratios, so
    each non-negative root is kept only if the circles touch the right way.
    """
    if p.gamma_AD == 0 or p.equal_speed:
        raise DegenerateRatio("quartic boundary needs gamma_AD not in {0, 1}")
    roots = _quadratic_roots(*quartic_in_y2(p, x))
    if roots is None:
        return []
    out = []
    for y2 in sorted(set(roots)):
        if y2 >= 0 and _tangency_residual(p, x, y2) < tol:
            out.append(y2)
    return out


def classify_stationary(target_pos, p: ZoneParams) -> Label:
    if p.equal_speed:
        m = -target_pos[0]
    else:
        ad = apollonius_circle((-p.x_A, 0.0), (p.x_A, 0.0), p.gamma_AD)
        dist = math.hypot(target_pos[0] - ad.center[0], target_pos[1] - ad.center[1])
        m = ad.radius - dist if p.gamma_AD < 1 else dist - ad.radius
    if abs(m) < BOUNDARY_TOL:
        return Label.BOUNDARY
    return Label.ESCAPE if m > 0 else Label.CAPTURE


def frame_transform(points, x0: float, y0: float, phi: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    dx, dy = pts[..., 0] - x0, pts[..., 1] - y0
    c, s = math.cos(phi), math.sin(phi)
    return np.stack([dx * c + dy * s, dy * c - dx * s], axis=-1)


def canonical_frame(attacker_pos, defender_pos) -> tuple[float, float, float]:
    """(x0, y0, phi) mapping attacker to (+d/2, 0) and defender to (-d/2, 0)."""
    ax, ay = attacker_pos
    dx, dy = defender_pos
    return 0.5 * (ax + dx), 0.5 * (ay + dy), math.atan2(ay - dy, ax - dx)


def margin_general(target_pos, attacker_pos, defender_pos, p: ZoneParams) -> float:
    """escape_margin for arbitrary attacker/defender positions."""
    x0, y0, phi = canonical_frame(attacker_pos, defender_pos)
    t = frame_transform(np.asarray(target_pos, dtype=float), x0, y0, phi)
    half = 0.5 * math.hypot(attacker_pos[0] - defender_pos[0], attacker_pos[1] - defender_pos[1])
    q = ZoneParams(x_A=half, gamma_AT=p.gamma_AT, gamma_AD=p.gamma_AD)
    return escape_margin((float(t[0]), float(t[1])), q)


@dataclass(frozen=True)
class PrePhase:
    """Outcome of the stationary-target phase of a variable-velocity engagement."""

    intercepted: bool
    e_violated: bool
    time: float
    attacker: tuple[float, float]
    defender: tuple[float, float]


def collision_point(attacker_pos, heading, defender_pos, speed_ratio: float,
                    max_travel: float) -> tuple[float, float] | None:
    """First point of a straight attacker path that the defender reaches no
    later than the attacker, if it lies within ``max_travel`` of the start."""
    ux, uy = math.cos(heading), math.sin(heading)
    wx, wy = attacker_pos[0] - defender_pos[0], attacker_pos[1] - defender_pos[1]
    # |w + s u|^2 = (g s)^2  ->  (1 - g^2) s^2 + 2 (w.u) s + |w|^2 = 0
    a = 1.0 - speed_ratio ** 2
    b = 2.0 * (wx * ux + wy * uy)
    c = wx * wx + wy * wy
    if abs(a) < 1e-12:
        roots = [-c / b] if b < 0 else []
    else:
        disc = b * b - 4 * a * c
        if disc < 0:
            return None
        sq = math.sqrt(disc)
        roots = sorted(r for r in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)))
    for s in roots:
        if 0.0 <= s <= max_travel:
            return attacker_pos[0] + s * ux, attacker_pos[1] + s * uy
    return None


def stationary_pre_phase(target_pos, p: ZoneParams) -> PrePhase:
    """Integrate the engagement while the target rests.

    The attacker flies straight at the target.  With the ``intercept`` policy
    the defender flies straight to the collision point on the attacker's path
    when one exists short of the target, otherwise straight to the target; the
    ``pursuit`` policy pure-pursues the attacker.  Stops when the defender
    intercepts or the safe distance is reached.  Speeds are normalized to the
    attacker's (attacker 1, defender gamma_AD).
    """
    tx, ty = float(target_pos[0]), float(target_pos[1])
    ax, ay = p.x_A, 0.0
    dx, dy = -p.x_A, 0.0
    R0 = math.hypot(tx - ax, ty - ay)
    e = p.e_fraction * R0
    goal = None
    if p.defender_policy == "intercept":
        goal = collision_point((ax, ay), math.atan2(ty - ay, tx - ax), (dx, dy),
                               p.gamma_AD, R0) or (tx, ty)
    h_a, h_d = p.pre_phase_dt, p.gamma_AD * p.pre_phase_dt
    steps = int(math.ceil(p.pre_phase_max_time / p.pre_phase_dt))
    for k in range(steps + 1):
        R = math.hypot(tx - ax, ty - ay)
        r = math.hypot(ax - dx, ay - dy)
        if r <= p.r_capture:
            return PrePhase(True, False, k * p.pre_phase_dt, (ax, ay), (dx, dy))
        if R <= e:
            return PrePhase(False, True, k * p.pre_phase_dt, (ax, ay), (dx, dy))
        sa = min(h_a, R) / R
        aim = goal if goal is not None else (ax, ay)
        gap = math.hypot(aim[0] - dx, aim[1] - dy)
        sd = min(h_d, gap) / gap if gap > 0 else 0.0
        nax, nay = ax + sa * (tx - ax), ay + sa * (ty - ay)
        dx, dy = dx + sd * (aim[0] - dx), dy + sd * (aim[1] - dy)
        ax, ay = nax, nay
    raise NonConvergent(f"safe distance not reached within {p.pre_phase_max_time} time units")


def variable_velocity_margin(target_pos, p: ZoneParams) -> tuple[float, PrePhase]:
    """Escape margin in the frame built at the moment the safe distance is hit
    (+inf when the defender intercepts first)."""
    pre = stationary_pre_phase(target_pos, p)
    if pre.intercepted:
        return math.inf, pre
    return margin_general(target_pos, pre.attacker, pre.defender, p), pre


def classify_variable_velocity_detail(target_pos, p: ZoneParams,
                                      tol: float = BOUNDARY_TOL) -> tuple[Label, PrePhase]:
    m, pre = variable_velocity_margin(target_pos, p)
    if abs(m) < tol:
        return Label.BOUNDARY, pre
    return (Label.ESCAPE if m > 0 else Label.CAPTURE), pre


def classify_variable_velocity(target_pos, p: ZoneParams) -> Label:
    return classify_variable_velocity_detail(target_pos, p)[0]


def _disc_samples(center, radius: float, n: int = 72) -> np.ndarray:
    ang = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    ring = np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)
    return np.vstack([np.asarray(center, dtype=float)[None], ring])


def stochastic_margin(target_pos, p: ZoneParams, samples: int = 72) -> float:
    """Worst-case escape margin over attacker positions within 3 sigma of nominal
    (disc centre plus ``samples`` points on its rim)."""
    if p.sigma_pos == 0:
        return escape_margin(target_pos, p)
    D = (-p.x_A, 0.0)
    return min(margin_general(target_pos, a, D, p)
               for a in _disc_samples((p.x_A, 0.0), 3.0 * p.sigma_pos, samples))


def classify_stochastic(target_pos, p: ZoneParams) -> Label:
    nominal = classify_constant_speed(target_pos, p)
    if p.sigma_pos == 0 or nominal is not Label.ESCAPE:
        return nominal
    m = stochastic_margin(target_pos, p)
    if abs(m) < BOUNDARY_TOL:
        return Label.BOUNDARY
    return Label.ESCAPE if m > 0 else Label.CAPTURE


stochastic_classify = classify_stochastic

CLASSIFIERS: dict[ZoneMode, Callable[[tuple[float, float], ZoneParams], Label]] = {
    ZoneMode.CONSTANT_SPEED: classify_constant_speed,
    ZoneMode.STATIONARY: classify_stationary,
    ZoneMode.VARIABLE_VELOCITY: classify_variable_velocity,
    ZoneMode.STOCHASTIC: classify_stochastic,
}


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 0 or self.ny < 0 or self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError("invalid grid")

    @classmethod
    def square(cls, half_width: float, n: int, center=(0.0, 0.0)) -> "GridSpec":
        cx, cy = center
        return cls(cx - half_width, cx + half_width, cy - half_width, cy + half_width, n, n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx if self.nx else 0.0

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny if self.ny else 0.0

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.x_min + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.y_min + (np.arange(self.ny) + 0.5) * self.dy
        return xs, ys

    def cell_of(self, point) -> tuple[int, int]:
        """(iy, ix) of the cell containing ``point``."""
        ix = int(min(self.nx - 1, max(0, (point[0] - self.x_min) // self.dx)))
        iy = int(min(self.ny - 1, max(0, (point[1] - self.y_min) // self.dy)))
        return iy, ix


@dataclass
class ZoneMap:
    grid: GridSpec
    labels: np.ndarray          # (ny, nx) array of Label
    boundary: list[np.ndarray] = field(default_factory=list)   # polylines, (n, 2) each
    mode: ZoneMode = ZoneMode.CONSTANT_SPEED
    params: ZoneParams | None = None
    errors: dict[tuple[int, int], str] = field(default_factory=dict)

    def escape_mask(self) -> np.ndarray:
        return np.array([[lab is Label.ESCAPE for lab in row] for row in self.labels],
                        dtype=bool).reshape(self.labels.shape)

    def escape_area(self) -> float:
        return float(self.escape_mask().sum()) * self.grid.dx * self.grid.dy


def extract_boundary(grid: GridSpec, escape: np.ndarray) -> list[np.ndarray]:
    """Marching-squares polylines separating escape cells from the rest."""
    if escape.size == 0 or escape.all() or not escape.any():
        return []
    from skimage.measure import find_contours

    xs, ys = grid.centers()
    lines = []
    for c in find_contours(escape.astype(float), 0.5):
        iy, ix = c[:, 0], c[:, 1]
        lines.append(np.stack([np.interp(ix, np.arange(grid.nx), xs),
                               np.interp(iy, np.arange(grid.ny), ys)], axis=1))
    return lines


def build_zone_map(p: ZoneParams, grid: GridSpec,
                   mode: ZoneMode | str = ZoneMode.CONSTANT_SPEED) -> ZoneMap:
    mode = ZoneMode(mode)
    if mode is ZoneMode.VARIABLE_VELOCITY:
        # numerical map: within half a cell of the switch counts as Boundary
        tol = 0.5 * min(grid.dx, grid.dy)

        def classify(pt, q):
            return classify_variable_velocity_detail(pt, q, tol)[0]
    else:
        classify = CLASSIFIERS[mode]
    xs, ys = grid.centers()
    labels = np.empty((grid.ny, grid.nx), dtype=object)
    errors = {}
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            try:
                labels[iy, ix] = classify((float(x), float(y)), p)
            except NonConvergent as exc:
                labels[iy, ix] = Label.BOUNDARY
                errors[(iy, ix)] = str(exc)
    zmap = ZoneMap(grid, labels, mode=mode, params=p, errors=errors)
    zmap.boundary = extract_boundary(grid, zmap.escape_mask())
    return zmap


def x_intercept(classify: Callable[[tuple[float, float], ZoneParams], Label], p: ZoneParams,
                lo: float, hi: float, tol: float = 1e-10) -> float:
    """Bisection for the escape/capture switch along the positive x-axis."""
    if classify((lo, 0.0), p) is not Label.ESCAPE or classify((hi, 0.0), p) is Label.ESCAPE:
        raise ValueError("bracket does not straddle the boundary")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if classify((mid, 0.0), p) is Label.ESCAPE:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
