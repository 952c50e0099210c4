"""Discretized idiosyncratic unicycle and the contact rules.

State arrays are ``(N, 3)`` float64 with columns ``x, y, heading``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import ActuationIdiosyncrasy, AgentState, Arena, ControlCommand

TWO_PI = 2.0 * math.pi


def normalize_angle(a):
    """Wrap angle(s) into [-pi, pi)."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    # fmod rounding can land exactly on +pi
    w = np.where(w >= math.pi, -math.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def rates(state: AgentState, cmd: ControlCommand, idio: ActuationIdiosyncrasy):
    """Instantaneous (dx/dt, dy/dt, dheading/dt) before Euler scaling."""
    s = cmd.forward_speed * idio.speed_factor
    return (s * math.cos(state.heading), s * math.sin(state.heading),
            cmd.turn_rate * idio.turn_factor)


def integrate(state: AgentState, cmd: ControlCommand,
              idio: ActuationIdiosyncrasy, dt: float) -> AgentState:
    """One forward-Euler step of the unicycle."""
    g1, g2, g3 = rates(state, cmd, idio)
    return AgentState(state.x + g1 * dt, state.y + g2 * dt,
                      normalize_angle(state.heading + g3 * dt), state.id)


def integrate_all(states: np.ndarray, u: np.ndarray, factors: np.ndarray,
                  dt: float) -> np.ndarray:
    """Vectorized :func:`integrate` for every agent.

    ``u`` is ``(N, 2)`` commands, ``factors`` ``(N, 2)`` effective
    (speed, turn) multipliers for this tick.
    """
    speed = u[:, 0] * factors[:, 0]
    out = np.empty_like(states)
    out[:, 0] = states[:, 0] + speed * np.cos(states[:, 2]) * dt
    out[:, 1] = states[:, 1] + speed * np.sin(states[:, 2]) * dt
    out[:, 2] = normalize_angle(states[:, 2] + u[:, 1] * factors[:, 1] * dt)
    return out


WALL = -1


@dataclass(frozen=True)
class CollisionEvent:
    tick: int
    i: int
    j: int  # partner id, or WALL
    bearing: float  # where the partner (or wall normal) lies in i's frame

    def to_record(self) -> dict:
        return {"event": "collision", "tick": self.tick, "i": self.i,
                "j": "wall" if self.j == WALL else self.j, "bearing": self.bearing}


@njit(cache=True)
def _contacts(prev, new, radius, half_w, half_h, keep_heading):
    n = new.shape[0]
    out = new.copy()
    stopped = np.zeros(n, dtype=np.bool_)
    thresh = 2.0 * radius
    # rows: i, j, bearing of j from i (both directions recorded)
    ev_i = np.empty(n * n + 4 * n, dtype=np.int64)
    ev_j = np.empty(n * n + 4 * n, dtype=np.int64)
    ev_b = np.empty(n * n + 4 * n, dtype=np.float64)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = new[j, 0] - new[i, 0]
            dy = new[j, 1] - new[i, 1]
            if dx * dx + dy * dy < thresh * thresh:
                bij = math.atan2(dy, dx) - new[i, 2]
                bji = math.atan2(-dy, -dx) - new[j, 2]
                bij = (bij + math.pi) % (2 * math.pi) - math.pi
                bji = (bji + math.pi) % (2 * math.pi) - math.pi
                if abs(bij) <= 0.5 * math.pi:
                    stopped[i] = True
                if abs(bji) <= 0.5 * math.pi:
                    stopped[j] = True
                ev_i[k] = i
                ev_j[k] = j
                ev_b[k] = bij
                k += 1
    for i in range(n):
        if stopped[i]:
            out[i, 0] = prev[i, 0]
            out[i, 1] = prev[i, 1]
            if not keep_heading:
                out[i, 2] = prev[i, 2]
    lo_x, hi_x = -half_w + radius, half_w - radius
    lo_y, hi_y = -half_h + radius, half_h - radius
    for i in range(n):
        for axis in range(2):
            # wall normal bearings: +x wall at 0, +y wall at pi/2
            if axis == 0:
                lo, hi, ang = lo_x, hi_x, 0.0
            else:
                lo, hi, ang = lo_y, hi_y, 0.5 * math.pi
            if out[i, axis] > hi:
                out[i, axis] = hi
                b = ang - out[i, 2]
            elif out[i, axis] < lo:
                out[i, axis] = lo
                b = ang + math.pi - out[i, 2]
            else:
                continue
            ev_i[k] = i
            ev_j[k] = -1
            ev_b[k] = (b + math.pi) % (2 * math.pi) - math.pi
            k += 1
    return out, stopped, ev_i[:k], ev_j[:k], ev_b[:k]


def resolve_collisions(prev: np.ndarray, new: np.ndarray, collision_radius: float,
                       arena: Arena, tick: int = 0, revert: str = "position"):
    """Apply the stop-if-in-front contact rule, then clamp to the arena.

    Contacts are detected on the post-integration poses. An agent whose
    partner lies within +-90 degrees of its heading is stopped for this tick:
    with ``revert="position"`` it keeps its pre-integration position but
    still turns in place, with ``revert="pose"`` the heading reverts too.
    The partner is unaffected unless it also sees this agent in front. Walls clamp the centre so the body stays
    inside, heading unchanged.

    Returns ``(states, stopped, events)``.
    """
    prev = np.ascontiguousarray(prev, dtype=np.float64)
    new = np.ascontiguousarray(new, dtype=np.float64)
    out, stopped, ei, ej, eb = _contacts(prev, new, float(collision_radius),
                                         0.5 * arena.width, 0.5 * arena.height,
                                         revert == "position")
    events = [CollisionEvent(tick, int(i), int(j), float(b))
              for i, j, b in zip(ei, ej, eb)]
    return out, stopped, events
