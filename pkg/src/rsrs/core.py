"""World container, ring initializer and the per-tick loop.

A tick is synchronous: every agent senses the previous tick's world, then
all commands are computed, then everyone moves, then contacts and walls are
resolved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import kinematics, sensing
from .config import AgentState, ControlCommand, TrialConfig
from .controllers import build_controller
from .kinematics import CollisionEvent, WALL
from .metrics import Phase, TrialMetrics, classify, compute_metrics
from .rng import streams, truncated_normal

Controller = Callable[[int, int, int], ControlCommand]

MIN_FACTOR = 1e-6


class SimulationError(RuntimeError):
    def __init__(self, msg: str, tick: int | None = None):
        super().__init__(msg if tick is None else f"tick {tick}: {msg}")
        self.tick = tick


class PlacementError(SimulationError):
    pass


@dataclass
class WorldState:
    tick: int
    states: np.ndarray          # (N, 3): x, y, heading
    factors: np.ndarray         # (N, 2): base speed/turn factors for each agent
    stuck: np.ndarray           # (N,): stopped by a contact on the last tick
    rngs: dict = field(repr=False, default_factory=dict)

    @property
    def n_agents(self) -> int:
        return self.states.shape[0]

    def agents(self) -> list[AgentState]:
        return [AgentState(float(x), float(y), float(h), i)
                for i, (x, y, h) in enumerate(self.states)]


@dataclass
class TickEvents:
    tick: int
    raw: np.ndarray             # geometric hits before noise
    outputs: np.ndarray         # emitted 1-bit outputs
    commands: np.ndarray        # (N, 2) commands after clipping
    stopped: np.ndarray
    collisions: list[CollisionEvent]


def init_ring(config: TrialConfig, rngs: dict | None = None,
              angles: np.ndarray | None = None) -> WorldState:
    """Place agents on a ring around the arena centre, facing outward.

    Angles are uniform random (or evenly spaced with ``init.even``) unless
    given explicitly. Random placements that put two bodies in contact are
    redrawn up to ``init.max_retries`` times.
    """
    rngs = rngs if rngs is not None else streams(config.seed)
    n = config.n_agents
    radius = config.ring_radius
    min_sep = 2.0 * config.collision_radius

    def place(phi, rho=None):
        rho = radius if rho is None else rho
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi),
                                kinematics.normalize_angle(phi)])

    def clear(pos):
        if n < 2 or min_sep == 0:
            return True
        d = np.hypot(*(pos[:, None, :2] - pos[None, :, :2]).transpose(2, 0, 1))
        return bool(d[np.triu_indices(n, 1)].min() >= min_sep)

    if angles is not None:
        states = place(np.asarray(angles, dtype=float).reshape(n))
    elif config.init.even:
        states = place(2.0 * math.pi * np.arange(n) / n)
        if not clear(states):
            raise PlacementError(f"{n} agents do not fit on a ring of radius {radius:.3f} m")
    else:
        gen = rngs["placement"]
        for _ in range(config.init.max_retries + 1):
            phi = gen.uniform(-math.pi, math.pi, n)
            rho = None
            if config.init.placement == "disk":
                rho = radius * np.sqrt(gen.random(n))
            states = place(phi, rho)
            if clear(states):
                break
        else:
            raise PlacementError(f"could not place {n} agents without contact "
                                 f"after {config.init.max_retries} retries")

    idio = rngs["idiosyncrasy"]
    factors = np.column_stack([
        truncated_normal(config.speed_population(), idio.random(n)),
        truncated_normal(config.turn_population(), idio.random(n)),
    ])
    return WorldState(0, states, factors, np.zeros(n, dtype=bool), rngs)


def step_world(world: WorldState, config: TrialConfig,
               controller: Controller) -> tuple[WorldState, TickEvents]:
    n = world.n_agents
    prev = world.states
    raw = sensing.raw_detections(prev, config.sensor.fov, config.collision_radius)
    y = sensing.apply_noise(raw, world.rngs["sensing"].random(n), config.sensor)

    u = np.empty((n, 2))
    bounds = config.actuation
    for i in range(n):
        cmd = controller(i, int(y[i]), world.tick)
        u[i] = bounds.clip(cmd.forward_speed, cmd.turn_rate)

    factors = world.factors
    if config.jitter_sd > 0:
        jitter = world.rngs["jitter"].normal(0.0, config.jitter_sd, (n, 2))
        factors = np.maximum(factors + jitter, MIN_FACTOR)

    moved = kinematics.integrate_all(prev, u, factors, config.dt)
    if not np.all(np.isfinite(moved)):
        raise SimulationError("non-finite state after integration", world.tick)
    states, stopped, collisions = kinematics.resolve_collisions(
        prev, moved, config.collision_radius, config.arena, world.tick,
        config.collision_revert)

    nxt = WorldState(world.tick + 1, states, world.factors, stopped, world.rngs)
    return nxt, TickEvents(world.tick, raw, y, u, stopped, collisions)


@dataclass
class TrialResult:
    config: TrialConfig
    states: np.ndarray          # (T+1, N, 3)
    outputs: np.ndarray         # (T, N)
    raw: np.ndarray             # (T, N)
    commands: np.ndarray        # (T, N, 2)
    stopped: np.ndarray         # (T, N)
    factors: np.ndarray         # (N, 2)
    collisions: list[CollisionEvent]
    metrics: TrialMetrics | None
    phase: Phase | None

    @property
    def n_ticks(self) -> int:
        return self.outputs.shape[0]

    @property
    def agent_collisions(self) -> int:
        return sum(1 for e in self.collisions if e.j != WALL)

    @property
    def wall_contacts(self) -> int:
        return sum(1 for e in self.collisions if e.j == WALL)

    def trajectory_records(self, log_every: int = 1) -> Iterator[dict]:
        """One record per (tick, agent); the final state carries no output."""
        T = self.n_ticks
        ticks = list(range(0, T, max(1, log_every)))
        if ticks[-1] != T:
            ticks.append(T)
        for t in ticks:
            for i in range(self.states.shape[1]):
                x, y, h = self.states[t, i]
                rec = {"tick": t, "id": i, "x": float(x), "y": float(y), "heading": float(h)}
                if t < T:
                    rec["output"] = int(self.outputs[t, i])
                    rec["raw"] = bool(self.raw[t, i])
                    rec["u1"] = float(self.commands[t, i, 0])
                    rec["u2"] = float(self.commands[t, i, 1])
                else:
                    rec["output"] = rec["raw"] = rec["u1"] = rec["u2"] = None
                yield rec

    def event_records(self) -> Iterator[dict]:
        for e in self.collisions:
            yield e.to_record()

    def summary(self) -> dict:
        return {
            "seed": self.config.seed,
            "config_digest": self.config.digest(),
            "n_agents": self.config.n_agents,
            "v": self.config.v,
            "omega": self.config.omega,
            "ticks": self.n_ticks,
            "agent_collisions": self.agent_collisions,
            "wall_contacts": self.wall_contacts,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "phase": str(self.phase) if self.phase else None,
        }


def dumps(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")


def run_trial(config: TrialConfig, controller: Controller | None = None,
              n_ticks: int | None = None, classify_phase: bool = True) -> TrialResult:
    """Run ``ceil(duration / dt)`` ticks (or ``n_ticks``) from a ring start."""
    controller = controller or build_controller(config)
    T = n_ticks if n_ticks is not None else config.n_ticks
    world = init_ring(config)
    n = world.n_agents
    states = np.empty((T + 1, n, 3))
    outputs = np.empty((T, n), dtype=np.int8)
    raw = np.empty((T, n), dtype=bool)
    commands = np.empty((T, n, 2))
    stopped = np.empty((T, n), dtype=bool)
    collisions: list[CollisionEvent] = []
    pairs_by_tick: list[set] = []
    states[0] = world.states
    for t in range(T):
        world, ev = step_world(world, config, controller)
        states[t + 1] = world.states
        outputs[t] = ev.outputs
        raw[t] = ev.raw
        commands[t] = ev.commands
        stopped[t] = ev.stopped
        collisions.extend(ev.collisions)
        pairs_by_tick.append({(e.i, e.j) for e in ev.collisions if e.j != WALL})

    metrics = phase = None
    if classify_phase:
        metrics = compute_metrics(states, stopped, pairs_by_tick, config.dt, config.arena,
                                  config.collision_radius, config.metrics.window_fraction)
        phase = classify(metrics, config.metrics.thresholds)
    return TrialResult(config, states, outputs, raw, commands, stopped, world.factors,
                       collisions, metrics, phase)
