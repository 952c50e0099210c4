"""Binary presence sensing: FOV geometry plus false positive/negative noise.

Targets are disks of ``target_radius`` (the robots carry reflective tape
around their whole perimeter), so a target counts as seen when any part of
its disk touches the closed FOV region.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .config import AgentState, Cone, Polygon, SensorModel

CONE, POLYGON = 0, 1


@njit(cache=True)
def _seg_dist2(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    L = dx * dx + dy * dy
    t = 0.0
    if L > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / L
        t = min(1.0, max(0.0, t))
    qx, qy = ax + t * dx - px, ay + t * dy - py
    return qx * qx + qy * qy


@njit(cache=True)
def _cone_hit(px, py, rng, half, rad):
    d = math.hypot(px, py)
    ang = abs(math.atan2(py, px))
    if d <= rng and ang <= half:
        return True
    if rad <= 0.0:
        return False
    # distance to the sector boundary: two straight edges and the arc
    ex, ey = rng * math.cos(half), rng * math.sin(half)
    r2 = rad * rad
    if _seg_dist2(px, py, 0.0, 0.0, ex, ey) <= r2:
        return True
    if _seg_dist2(px, py, 0.0, 0.0, ex, -ey) <= r2:
        return True
    return ang <= half and abs(d - rng) <= rad


@njit(cache=True)
def _poly_hit(px, py, vx, vy, rad):
    n = vx.shape[0]
    inside = False
    r2 = rad * rad
    j = n - 1
    for i in range(n):
        xi, yi, xj, yj = vx[i], vy[i], vx[j], vy[j]
        # boundary counts as inside
        if _seg_dist2(px, py, xj, yj, xi, yi) <= max(r2, 1e-24):
            return True
        if (yi > py) != (yj > py):
            xs = xi + (py - yi) * (xj - xi) / (yj - yi)
            if px < xs:
                inside = not inside
        j = i
    return inside


@njit(cache=True)
def _to_frame(ox, oy, oh, tx, ty):
    dx, dy = tx - ox, ty - oy
    c, s = math.cos(oh), math.sin(oh)
    return c * dx + s * dy, -s * dx + c * dy


@njit(cache=True)
def _hit_matrix(states, kind, rng, half, vx, vy, rad):
    n = states.shape[0]
    hits = np.zeros((n, n), dtype=np.bool_)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            px, py = _to_frame(states[i, 0], states[i, 1], states[i, 2],
                               states[j, 0], states[j, 1])
            if kind == CONE:
                hits[i, j] = _cone_hit(px, py, rng, half, rad)
            else:
                hits[i, j] = _poly_hit(px, py, vx, vy, rad)
    return hits


def _fov_args(fov):
    if isinstance(fov, Cone):
        return CONE, float(fov.range), float(fov.half_angle), np.zeros(1), np.zeros(1)
    if isinstance(fov, Polygon):
        v = np.asarray(fov.vertices, dtype=np.float64)
        return POLYGON, 0.0, 0.0, np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1])
    raise TypeError(f"unsupported fov {fov!r}")


def in_fov(observer: AgentState, target: AgentState, fov: Cone | Polygon,
           target_radius: float = 0.0) -> bool:
    """Does any part of ``target``'s disk fall inside ``observer``'s FOV?"""
    kind, rng, half, vx, vy = _fov_args(fov)
    px, py = _to_frame(observer.x, observer.y, observer.heading, target.x, target.y)
    if kind == CONE:
        return bool(_cone_hit(px, py, rng, half, float(target_radius)))
    return bool(_poly_hit(px, py, vx, vy, float(target_radius)))


def hit_matrix(states: np.ndarray, fov: Cone | Polygon,
               target_radius: float = 0.0) -> np.ndarray:
    """``hits[i, j]`` is True when agent j is geometrically inside i's FOV."""
    kind, rng, half, vx, vy = _fov_args(fov)
    return _hit_matrix(np.ascontiguousarray(states, dtype=np.float64), kind, rng, half,
                       vx, vy, float(target_radius))


def raw_detections(states: np.ndarray, fov, target_radius: float = 0.0) -> np.ndarray:
    return hit_matrix(states, fov, target_radius).any(axis=1)


def apply_noise(raw: np.ndarray, draws: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """Flip raw hits with the sensor's error rates using uniform ``draws``.

    A raw hit is missed when its draw falls below the false-negative rate;
    an empty view reports a phantom when its draw falls below the
    false-positive rate. One draw per agent per tick.
    """
    raw = np.asarray(raw, dtype=bool)
    miss = draws < sensor.false_negative_rate
    phantom = draws < sensor.false_positive_rate
    return np.where(raw, ~miss, phantom).astype(np.int8)


def binary_output(i: int, states: np.ndarray, sensor: SensorModel,
                  rng: np.random.Generator, target_radius: float = 0.0) -> int:
    """Noisy 1-bit output of agent ``i`` given every agent's state."""
    states = np.asarray(states, dtype=np.float64)
    observer = AgentState(*states[i])
    raw = any(in_fov(observer, AgentState(*states[j]), sensor.fov, target_radius)
              for j in range(len(states)) if j != i)
    return int(apply_noise(np.array([raw]), rng.random(1), sensor)[0])


def point_in_polygon(x: float, y: float, polygon: Polygon) -> bool:
    """Closed point-in-polygon test (boundary counts as inside)."""
    _, _, _, vx, vy = _fov_args(polygon)
    return bool(_poly_hit(float(x), float(y), vx, vy, 0.0))


class PolygonCollapsed(ValueError):
    pass


def shrink_polygon(measured: Polygon, margin: float, check_samples: int = 2000,
                   seed: int = 0) -> Polygon:
    """Offset ``measured`` inward by ``margin`` meters.

    Uses shapely's negative buffer with mitred joins, so straight edges move
    in parallel and convex corners stay sharp. If the offset splits the
    region the largest piece is kept. The result is checked against the
    input on random points before it is returned.
    """
    from shapely.geometry import Polygon as ShapelyPolygon
    from shapely.geometry.polygon import orient

    if margin < 0:
        raise ValueError("margin must be >= 0")
    shape = ShapelyPolygon(measured.vertices)
    out = shape if margin == 0 else shape.buffer(-margin, join_style="mitre", mitre_limit=10.0)
    # drop collinear and near-duplicate vertices left by the offset
    out = out.simplify(1e-12 * max(1.0, measured.max_range))
    if out.is_empty or out.area <= 0:
        raise PolygonCollapsed(f"an inward offset of {margin} m leaves nothing of the polygon")
    if out.geom_type == "MultiPolygon":
        out = max(out.geoms, key=lambda g: g.area)
    out = orient(out, 1.0)
    result = Polygon(tuple(out.exterior.coords)[:-1])

    rng = np.random.default_rng(seed)
    lo = np.min(result.vertices, axis=0)
    hi = np.max(result.vertices, axis=0)
    for px, py in rng.uniform(lo, hi, (check_samples, 2)):
        if point_in_polygon(px, py, result) and not point_in_polygon(px, py, measured):
            raise AssertionError(f"shrunk polygon leaks outside input at ({px}, {py})")
    return result
