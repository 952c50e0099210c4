"""Trajectory metrics and the rule-based four-phase classifier."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .config import Arena, Thresholds


class Phase(str, enum.Enum):
    STABLE_MILLING = "StableMilling"
    SEMI_STABLE_MILLING = "SemiStableMilling"
    COLLIDING_UNSTABLE = "CollidingUnstable"
    DISPERSION = "Dispersion"

    def __str__(self):
        return self.value


PHASES = tuple(Phase)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class TrialMetrics:
    milling_order: float
    radial_cv: float
    centroid_drift: float
    collision_rate: float
    deadlock_fraction: float
    wall_fraction: float

    def to_dict(self) -> dict:
        return asdict(self)


def milling_order(positions: np.ndarray, headings: np.ndarray, eps: float = 1e-12) -> float:
    """Mean tangential alignment about the swarm centroid, in [0, 1].

    ``positions`` is ``(T, N, 2)``, ``headings`` ``(T, N)``. Each tick picks
    the rotation sense held by the majority of agents; an agent scores
    ``max(0, tangent . heading)``. Agents sitting on the centroid are skipped.
    """
    positions = np.asarray(positions, dtype=float)
    headings = np.asarray(headings, dtype=float)
    if positions.ndim != 3 or positions.shape[0] < 2 or positions.shape[1] < 2:
        raise MetricsError("milling_order needs >= 2 ticks and >= 2 agents")
    rel = positions - positions.mean(axis=1, keepdims=True)
    dist = np.hypot(rel[..., 0], rel[..., 1])
    valid = dist > eps * max(1.0, float(dist.max()))
    if not valid.any():
        raise MetricsError("every agent coincides with the centroid")
    safe = np.where(valid, dist, 1.0)
    # tangent . heading reduces to the z-component of rhat x hhat
    cross = (rel[..., 0] * np.sin(headings) - rel[..., 1] * np.cos(headings)) / safe
    votes = np.where(valid, np.sign(cross), 0.0).sum(axis=1, keepdims=True)
    sense = np.where(votes >= 0, 1.0, -1.0)
    score = np.maximum(0.0, sense * cross)
    return float(np.clip(score[valid].mean(), 0.0, 1.0))


def contact_onsets(pairs_by_tick: list[set], start: int, stop: int) -> int:
    """Count agent pairs that come into contact during ticks [start, stop)."""
    count = 0
    prev = pairs_by_tick[start - 1] if start > 0 else set()
    for t in range(start, stop):
        cur = pairs_by_tick[t]
        count += len(cur - prev)
        prev = cur
    return count


def window_start(n_ticks: int, window_fraction: float) -> int:
    return min(n_ticks - 1, int(math.floor(n_ticks * (1.0 - window_fraction))))


def compute_metrics(states: np.ndarray, stopped: np.ndarray, pairs_by_tick: list[set],
                    dt: float, arena: Arena, collision_radius: float,
                    window_fraction: float = 0.3) -> TrialMetrics:
    """Metrics over the trailing evaluation window of one trial.

    ``states`` is ``(T+1, N, 3)``, ``stopped`` ``(T, N)`` and
    ``pairs_by_tick[t]`` the set of agent pairs in contact after tick t.
    """
    n_ticks = stopped.shape[0]
    n = states.shape[1]
    s = window_start(n_ticks, window_fraction)
    win = states[s:]
    seconds = (n_ticks - s) * dt

    if n >= 2:
        order = milling_order(win[..., :2], win[..., 2])
        rel = win[..., :2] - win[..., :2].mean(axis=1, keepdims=True)
        d = np.hypot(rel[..., 0], rel[..., 1])
        mean_d = d.mean(axis=1)
        cv = np.where(mean_d > 0, d.std(axis=1) / np.where(mean_d > 0, mean_d, 1.0), 0.0)
        radial_cv = float(cv.mean())
    else:
        order, radial_cv = 0.0, 0.0

    c = win[..., :2].mean(axis=1)
    drift = float(np.hypot(*(c[-1] - c[0])) / seconds)
    collision_rate = contact_onsets(pairs_by_tick, s, n_ticks) / (n * seconds)
    deadlock = float(stopped[s:].mean(axis=0).max())

    final = states[-1]
    hw, hh = 0.5 * arena.width, 0.5 * arena.height
    gap = np.minimum.reduce([hw - final[:, 0], final[:, 0] + hw,
                             hh - final[:, 1], final[:, 1] + hh])
    # centres are clamped at one radius from the wall; "near" means the body
    # edge is within one more radius
    wall = float(np.mean(gap <= 2.0 * collision_radius + 1e-12))
    return TrialMetrics(order, radial_cv, drift, collision_rate, deadlock, wall)


def classify(m: TrialMetrics, t: Thresholds = Thresholds()) -> Phase:
    """First matching rule wins; anything unmatched falls back to Dispersion."""
    if m.deadlock_fraction >= t.deadlock:
        return Phase.COLLIDING_UNSTABLE
    if m.wall_fraction >= t.wall and m.milling_order < t.milling:
        return Phase.DISPERSION
    if m.milling_order >= t.milling and m.collision_rate <= t.collision_low:
        return Phase.STABLE_MILLING
    if m.milling_order >= t.milling_semi and m.collision_rate > t.collision_low:
        return Phase.SEMI_STABLE_MILLING
    return Phase.DISPERSION
