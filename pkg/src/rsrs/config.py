"""Trial configuration and the value types shared across the simulator.

Everything here is a frozen dataclass so that configs can be hashed,
compared, and passed between worker processes without copying concerns.
``TrialConfig.from_dict`` / ``to_dict`` define the on-disk format (JSON or
YAML, see :func:`load_config`).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised when a configuration violates its invariants."""


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float
    id: int = 0


@dataclass(frozen=True)
class ActuationIdiosyncrasy:
    speed_factor: float = 1.0
    turn_factor: float = 1.0
    per_step_jitter_sd: float = 0.0

    def __post_init__(self):
        if not (self.speed_factor > 0 and self.turn_factor > 0):
            raise ConfigError("idiosyncrasy factors must be strictly positive")
        if self.per_step_jitter_sd < 0:
            raise ConfigError("per_step_jitter_sd must be >= 0")


@dataclass(frozen=True)
class ControlCommand:
    forward_speed: float
    turn_rate: float


@dataclass(frozen=True)
class ActuationBounds:
    """Safe actuation envelope; commands are clipped into it."""

    u1_min: float = 0.0
    u1_max: float = 0.5
    u2_min: float = -2.0
    u2_max: float = 2.0

    def __post_init__(self):
        if self.u1_min > self.u1_max or self.u2_min > self.u2_max:
            raise ConfigError("actuation bounds are inverted")

    def clip(self, u1: float, u2: float) -> tuple[float, float]:
        return (min(max(u1, self.u1_min), self.u1_max),
                min(max(u2, self.u2_min), self.u2_max))


# --------------------------------------------------------------------------
# Sensor geometry


@dataclass(frozen=True)
class Cone:
    range: float = 0.7
    half_angle: float = math.radians(15.0)

    def __post_init__(self):
        if self.range <= 0:
            raise ConfigError("cone range must be > 0")
        if not 0 < self.half_angle <= math.pi:
            raise ConfigError("cone half_angle must be in (0, pi]")

    @property
    def max_range(self) -> float:
        return self.range


@dataclass(frozen=True)
class Polygon:
    """Simple polygon in the sensor frame (+x forward), counterclockwise."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise ConfigError("polygon needs at least 3 vertices")
        if not _is_simple(verts):
            raise ConfigError("polygon must be simple (non-self-intersecting)")
        if _signed_area(verts) < 0:
            object.__setattr__(self, "vertices", verts[::-1])

    @property
    def max_range(self) -> float:
        return max(math.hypot(x, y) for x, y in self.vertices)

    @property
    def area(self) -> float:
        return abs(_signed_area(self.vertices))


def _signed_area(verts) -> float:
    s = 0.0
    n = len(verts)
    for k in range(n):
        x0, y0 = verts[k]
        x1, y1 = verts[(k + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _segments_cross(p, q, r, s) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1, o2, o3, o4 = orient(p, q, r), orient(p, q, s), orient(r, s, p), orient(r, s, q)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p, q, r)) or (o2 == 0 and on_seg(p, q, s))
            or (o3 == 0 and on_seg(r, s, p)) or (o4 == 0 and on_seg(r, s, q)))


def _is_simple(verts) -> bool:
    n = len(verts)
    if abs(_signed_area(verts)) <= 0.0:
        return False
    edges = [(verts[k], verts[(k + 1) % n]) for k in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            if b == a + 1 or (a == 0 and b == n - 1):
                continue
            if _segments_cross(*edges[a], *edges[b]):
                return False
    return True


@dataclass(frozen=True)
class SensorModel:
    # Defaults sit at the pessimistic end of the measured Flockbot noise:
    # 5-8% false positives -> 8%, 80% boundary detection -> 20% misses.
    fov: Cone | Polygon = field(default_factory=Cone)
    false_positive_rate: float = 0.08
    false_negative_rate: float = 0.20

    def __post_init__(self):
        for name in ("false_positive_rate", "false_negative_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {rate}")

    def to_dict(self) -> dict:
        if isinstance(self.fov, Cone):
            fov = {"kind": "cone", "range": self.fov.range,
                   "half_angle": self.fov.half_angle}
        else:
            fov = {"kind": "polygon", "vertices": [list(v) for v in self.fov.vertices]}
        return {**fov, "false_positive_rate": self.false_positive_rate,
                "false_negative_rate": self.false_negative_rate}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorModel":
        d = dict(d)
        kind = d.pop("kind", "cone")
        if kind == "cone":
            fov = Cone(range=float(d.pop("range", Cone.range)),
                       half_angle=float(d.pop("half_angle", Cone.half_angle)))
        elif kind == "polygon":
            fov = Polygon(tuple(tuple(v) for v in d.pop("vertices")))
        else:
            raise ConfigError(f"unknown sensor kind {kind!r}")
        kw = {k: float(d.pop(k)) for k in ("false_positive_rate", "false_negative_rate")
              if k in d}
        if d:
            raise ConfigError(f"unknown sensor fields: {sorted(d)}")
        return cls(fov=fov, **kw)


# --------------------------------------------------------------------------
# Idiosyncrasy distributions


@dataclass(frozen=True)
class PopulationDistribution:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigError("population mean must be > 0")
        if not self.sigma >= 0:
            raise ConfigError("population sigma must be >= 0")


@dataclass(frozen=True)
class Bracket:
    commanded: float
    mu: float
    sigma: float


@dataclass(frozen=True)
class FactorDistribution:
    """Normal distribution of one actuation factor, optionally per commanded bracket.

    With several brackets the distribution at a commanded value is linearly
    interpolated between neighbouring brackets and clamped at the ends.
    Brackets are matched on ``|commanded|`` so one table serves both turn
    directions.
    """

    brackets: tuple[Bracket, ...] = (Bracket(1.0, 1.0, 0.0),)

    def __post_init__(self):
        bs = tuple(sorted(self.brackets, key=lambda b: b.commanded))
        if not bs:
            raise ConfigError("factor distribution needs at least one bracket")
        object.__setattr__(self, "brackets", bs)
        for b in bs:
            PopulationDistribution(b.mu, b.sigma)

    @classmethod
    def single(cls, mu: float, sigma: float) -> "FactorDistribution":
        return cls((Bracket(1.0, mu, sigma),))

    def at(self, commanded: float) -> PopulationDistribution:
        c = abs(commanded)
        bs = self.brackets
        if len(bs) == 1 or c <= bs[0].commanded:
            return PopulationDistribution(bs[0].mu, bs[0].sigma)
        if c >= bs[-1].commanded:
            return PopulationDistribution(bs[-1].mu, bs[-1].sigma)
        for lo, hi in zip(bs, bs[1:]):
            if lo.commanded <= c <= hi.commanded:
                w = (c - lo.commanded) / (hi.commanded - lo.commanded)
                return PopulationDistribution(lo.mu + w * (hi.mu - lo.mu),
                                              lo.sigma + w * (hi.sigma - lo.sigma))
        raise AssertionError("unreachable")

    def to_dict(self) -> list[dict]:
        return [dataclasses.asdict(b) for b in self.brackets]

    @classmethod
    def from_dict(cls, d) -> "FactorDistribution":
        if isinstance(d, dict):
            if "brackets" in d:
                d = d["brackets"]
            else:
                return cls.single(float(d["mu"]), float(d["sigma"]))
        return cls(tuple(Bracket(float(b["commanded"]), float(b["mu"]), float(b["sigma"]))
                         for b in d))


# Flockbot speed table (25 and 50 mm/s) pooled per bracket, as produced by
# calibrating data/flockbot_speed.csv.
FLOCKBOT_SPEED = FactorDistribution((
    Bracket(0.025, 0.8793333333333333, 0.017764383843334782),
    Bracket(0.050, 0.9711333333333334, 0.0019218047073865678),
))
# No turn-rate numbers were published; assume an unbiased factor with 5% spread.
FLOCKBOT_TURN = FactorDistribution.single(1.0, 0.05)


# --------------------------------------------------------------------------
# Trial configuration


@dataclass(frozen=True)
class Arena:
    width: float = 10.0
    height: float = 10.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("arena dimensions must be > 0")


@dataclass(frozen=True)
class RingInit:
    radius_factor: float = 1.1
    radius: float | None = None
    even: bool = False
    # "disk": uniform inside the circle; "ring": on its circumference
    placement: str = "disk"
    max_retries: int = 1000

    def __post_init__(self):
        if self.placement not in ("disk", "ring"):
            raise ConfigError("init.placement must be 'disk' or 'ring'")


@dataclass(frozen=True)
class ControllerSpec:
    kind: str = "mill"
    # "custom" tables: (u1, u2) emitted for y=0 and y=1
    table: tuple[tuple[float, float], tuple[float, float]] | None = None

    def __post_init__(self):
        if self.kind not in ("mill", "constant", "custom"):
            raise ConfigError(f"unknown controller kind {self.kind!r}")
        if self.kind == "custom":
            if self.table is None or len(self.table) != 2:
                raise ConfigError("custom controller needs a 2-row table")
            object.__setattr__(self, "table",
                               tuple((float(a), float(b)) for a, b in self.table))


@dataclass(frozen=True)
class Thresholds:
    name: str = "mill-v1"
    deadlock: float = 0.5
    wall: float = 0.5
    milling: float = 0.8
    milling_semi: float = 0.5
    collision_low: float = 0.02


@dataclass(frozen=True)
class MetricsConfig:
    window_fraction: float = 0.3
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if not 0 < self.window_fraction <= 1:
            raise ConfigError("window_fraction must be in (0, 1]")


@dataclass(frozen=True)
class TrialConfig:
    n_agents: int = 9
    v: float = 0.15
    omega: float = 0.75
    dt: float = 0.13
    duration: float = 300.0
    arena: Arena = field(default_factory=Arena)
    collision_radius: float = 0.075
    collision_revert: str = "position"
    init: RingInit = field(default_factory=RingInit)
    speed_distribution: FactorDistribution = FLOCKBOT_SPEED
    turn_distribution: FactorDistribution = FLOCKBOT_TURN
    jitter_sd: float = 0.0
    inflation_factor: float = 2.0
    sensor: SensorModel = field(default_factory=SensorModel)
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    actuation: ActuationBounds = field(default_factory=ActuationBounds)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        if not self.duration >= self.dt:
            raise ConfigError("duration must be >= dt")
        if not (isinstance(self.n_agents, int) and self.n_agents >= 1):
            raise ConfigError("n_agents must be an integer >= 1")
        if not self.inflation_factor >= 1:
            raise ConfigError("inflation_factor must be >= 1 "
                              "(simulated agents may not beat the measured ones)")
        if self.collision_radius < 0:
            raise ConfigError("collision_radius must be >= 0")
        if self.collision_revert not in ("position", "pose"):
            raise ConfigError("collision_revert must be 'position' or 'pose'")
        if self.jitter_sd < 0:
            raise ConfigError("jitter_sd must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def n_ticks(self) -> int:
        # Guard against 300/0.13 style float noise producing an extra tick.
        return max(1, math.ceil(self.duration / self.dt - 1e-9))

    @property
    def ring_radius(self) -> float:
        if self.init.radius is not None:
            return self.init.radius
        return self.init.radius_factor * self.sensor.fov.max_range

    def speed_population(self) -> PopulationDistribution:
        d = self.speed_distribution.at(self.v)
        return PopulationDistribution(d.mu, d.sigma * self.inflation_factor)

    def turn_population(self) -> PopulationDistribution:
        d = self.turn_distribution.at(self.omega)
        return PopulationDistribution(d.mu, d.sigma * self.inflation_factor)

    def replace(self, **changes) -> "TrialConfig":
        return dataclasses.replace(self, **changes)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "v": self.v,
            "omega": self.omega,
            "dt": self.dt,
            "duration": self.duration,
            "arena": dataclasses.asdict(self.arena),
            "collision_radius": self.collision_radius,
            "collision_revert": self.collision_revert,
            "init": dataclasses.asdict(self.init),
            "speed_distribution": self.speed_distribution.to_dict(),
            "turn_distribution": self.turn_distribution.to_dict(),
            "jitter_sd": self.jitter_sd,
            "inflation_factor": self.inflation_factor,
            "sensor": self.sensor.to_dict(),
            "controller": {"kind": self.controller.kind,
                           "table": ([list(r) for r in self.controller.table]
                                     if self.controller.table else None)},
            "actuation": dataclasses.asdict(self.actuation),
            "metrics": {"window_fraction": self.metrics.window_fraction,
                        "thresholds": dataclasses.asdict(self.metrics.thresholds)},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialConfig":
        d = dict(d)
        kw: dict[str, Any] = {}
        for key in ("v", "omega", "dt", "duration", "collision_radius",
                    "jitter_sd", "inflation_factor"):
            if key in d:
                kw[key] = float(d.pop(key))
        if "collision_revert" in d:
            kw["collision_revert"] = str(d.pop("collision_revert"))
        for key in ("n_agents", "seed"):
            if key in d:
                kw[key] = int(d.pop(key))
        if "arena" in d:
            kw["arena"] = Arena(**d.pop("arena"))
        if "init" in d:
            kw["init"] = RingInit(**d.pop("init"))
        if "speed_distribution" in d:
            kw["speed_distribution"] = FactorDistribution.from_dict(d.pop("speed_distribution"))
        if "turn_distribution" in d:
            kw["turn_distribution"] = FactorDistribution.from_dict(d.pop("turn_distribution"))
        if "sensor" in d:
            kw["sensor"] = SensorModel.from_dict(d.pop("sensor"))
        if "controller" in d:
            c = dict(d.pop("controller"))
            table = c.get("table")
            kw["controller"] = ControllerSpec(
                kind=c.get("kind", "mill"),
                table=tuple(tuple(r) for r in table) if table else None)
        if "actuation" in d:
            kw["actuation"] = ActuationBounds(**d.pop("actuation"))
        if "metrics" in d:
            m = dict(d.pop("metrics"))
            kw["metrics"] = MetricsConfig(
                window_fraction=float(m.get("window_fraction", 0.3)),
                thresholds=Thresholds(**m.get("thresholds", {})))
        if d:
            raise ConfigError(f"unknown config fields: {sorted(d)}")
        return cls(**kw)

    def digest(self) -> str:
        return config_digest(self.to_dict())


def config_digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def read_structured(path: str | Path) -> dict:
    """Read a JSON or YAML mapping (YAML is a superset, so one loader does both)."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data


def load_config(path: str | Path) -> TrialConfig:
    data = read_structured(path)
    # Sweep files nest the trial config under "base".
    if "base" in data and "axes" in data:
        data = data["base"]
    return TrialConfig.from_dict(data)
