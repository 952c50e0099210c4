"""From measured robot data to (deliberately worse) simulator parameters.

Speed and turn-rate runs give per-robot ratios of achieved to commanded
rates; the ratios are pooled into a Normal per commanded bracket and then
widened by an inflation factor so simulated agents are never more reliable
than the robots they stand in for.
"""

from __future__ import annotations

import csv
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .config import (Bracket, Cone, FactorDistribution, Polygon, PopulationDistribution,
                     SensorModel)


class CalibrationError(ValueError):
    """Bad calibration input. ``line`` is the 1-based CSV line when known."""

    def __init__(self, msg: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + msg)
        self.line = line


class SensorNotViable(CalibrationError):
    """No measured position reaches the detection threshold."""


@dataclass(frozen=True)
class SpeedMeasurement:
    robot: str
    commanded: float
    samples: tuple[float, ...]
    kind: str = "speed"


@dataclass(frozen=True)
class DetectionTrial:
    x: float
    y: float
    hits: int
    attempts: int

    def __post_init__(self):
        if self.attempts < 1 or not 0 <= self.hits <= self.attempts:
            raise CalibrationError(f"need 0 <= hits <= attempts and attempts >= 1, got "
                                   f"{self.hits}/{self.attempts}")

    @property
    def rate(self) -> float:
        return self.hits / self.attempts


def compute_theta(m: SpeedMeasurement) -> float:
    """Average measured rate over the commanded rate."""
    if m.commanded == 0:
        raise CalibrationError(f"robot {m.robot}: commanded {m.kind} is 0, ratio undefined")
    if not m.samples:
        raise CalibrationError(f"robot {m.robot}: no samples")
    return statistics.fmean(m.samples) / m.commanded


def fit_population(thetas) -> PopulationDistribution:
    """Sample mean and (n-1) standard deviation of the factors."""
    thetas = sorted(float(t) for t in thetas)  # order-independent summation
    if len(thetas) < 2:
        raise CalibrationError("need at least 2 factor values to fit a population")
    return PopulationDistribution(statistics.fmean(thetas), statistics.stdev(thetas))


def inflate(d: PopulationDistribution, factor: float) -> PopulationDistribution:
    if factor < 1:
        raise CalibrationError(f"inflation factor {factor} < 1 would make the "
                               "simulated agents better than the measured robots")
    return PopulationDistribution(d.mu, d.sigma * factor)


def fit_detection_polygon(trials, threshold: float = 0.8,
                          bearing_decimals: int = 6) -> Polygon:
    """Boundary of the region detected at least ``threshold`` of the time.

    Trials are grouped by bearing from the sensor. On each bearing the
    passing range is the farthest trial reached without an intervening
    failure, walking outward from the sensor. The polygon joins the sensor
    origin and those far points in bearing order, over the contiguous run
    of passing bearings around the measured bearing closest to straight
    ahead. Anchoring on that bearing makes the polygon shrink monotonically
    as ``threshold`` rises.
    """
    if not 0 < threshold <= 1:
        raise CalibrationError("threshold must be in (0, 1]")
    rays: dict[float, list[tuple[float, float]]] = defaultdict(list)
    for t in trials:
        b = round(math.atan2(t.y, t.x), bearing_decimals)
        rays[b].append((math.hypot(t.x, t.y), t.rate))
    if not rays:
        raise CalibrationError("no detection trials")

    reach: list[tuple[float, float]] = []   # (bearing, range) with range 0 = no pass
    for b in sorted(rays):
        best = 0.0
        for r, rate in sorted(rays[b]):
            if rate < threshold:
                break
            best = r
        reach.append((b, best))

    ahead = min(range(len(reach)), key=lambda k: (abs(reach[k][0]), reach[k][0]))
    if reach[ahead][1] == 0:
        raise SensorNotViable(
            f"no position straight ahead is detected at least {threshold:.0%} of the time; "
            "the sensor cannot support the behavior and a hardware upgrade is needed")
    lo = hi = ahead
    while lo > 0 and reach[lo - 1][1] > 0:
        lo -= 1
    while hi < len(reach) - 1 and reach[hi + 1][1] > 0:
        hi += 1
    run = reach[lo:hi + 1]
    if len(run) < 2:
        raise SensorNotViable("the passing region spans a single bearing; "
                              "need at least two to form a polygon")
    verts = [(0.0, 0.0)] + [(r * math.cos(b), r * math.sin(b)) for b, r in run]
    return Polygon(tuple(verts))


# --------------------------------------------------------------------------
# CSV ingestion


def _rows(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CalibrationError("empty file", path=str(path))
        reader.fieldnames = [f.strip().lower() for f in reader.fieldnames]
        for row in reader:
            yield reader.line_num, {k: (v or "").strip() for k, v in row.items() if k}


def read_rate_csv(path, speed_scale: float = 1e-3) -> list[SpeedMeasurement]:
    """Read ``robot,kind,commanded,sample`` rows, one per measured sample.

    ``kind`` is ``speed`` or ``turn``. Speeds are multiplied by
    ``speed_scale`` (default: the file is in mm/s); turn rates are rad/s.
    """
    groups: dict[tuple, list[float]] = defaultdict(list)
    for line, row in _rows(path):
        try:
            kind = row.get("kind") or "speed"
            if kind not in ("speed", "turn"):
                raise ValueError(f"kind must be speed or turn, got {kind!r}")
            robot = row["robot"]
            if not robot:
                raise ValueError("empty robot label")
            scale = speed_scale if kind == "speed" else 1.0
            commanded = float(row["commanded"]) * scale
            sample = float(row["sample"]) * scale
            if not (math.isfinite(commanded) and math.isfinite(sample)):
                raise ValueError("non-finite value")
        except (KeyError, ValueError) as exc:
            raise CalibrationError(f"unparseable row ({exc})", line, str(path)) from None
        groups[(kind, robot, commanded)].append(sample)
    return [SpeedMeasurement(robot, commanded, tuple(samples), kind)
            for (kind, robot, commanded), samples in groups.items()]


def read_detection_csv(path) -> list[DetectionTrial]:
    """Read ``x,y,hits,attempts`` rows (sensor frame, meters)."""
    trials = []
    for line, row in _rows(path):
        try:
            trials.append(DetectionTrial(float(row["x"]), float(row["y"]),
                                         int(row["hits"]), int(row["attempts"])))
        except (KeyError, ValueError) as exc:
            raise CalibrationError(f"unparseable row ({exc})", line, str(path)) from None
    return trials


# --------------------------------------------------------------------------
# Bundle


@dataclass
class CalibrationBundle:
    speed: FactorDistribution | None
    turn: FactorDistribution | None
    inflation_factor: float
    sensor: SensorModel | None
    thetas: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def config_fragment(self) -> dict:
        """Keys that drop straight into a trial config."""
        frag: dict = {"inflation_factor": self.inflation_factor}
        if self.speed is not None:
            frag["speed_distribution"] = self.speed.to_dict()
        if self.turn is not None:
            frag["turn_distribution"] = self.turn.to_dict()
        if self.sensor is not None:
            frag["sensor"] = self.sensor.to_dict()
        return frag

    def to_dict(self) -> dict:
        inflated = {}
        for name, dist in (("speed", self.speed), ("turn", self.turn)):
            if dist is not None:
                inflated[name] = [
                    {"commanded": b.commanded, "mu": b.mu,
                     "sigma": inflate(PopulationDistribution(b.mu, b.sigma),
                                      self.inflation_factor).sigma}
                    for b in dist.brackets]
        return {"config": self.config_fragment(),
                "report": {"thetas": self.thetas, "inflated": inflated,
                           "warnings": self.warnings}}


def fit_brackets(measurements, kind: str) -> tuple[FactorDistribution | None, list[dict]]:
    by_cmd: dict[float, list[float]] = defaultdict(list)
    rows = []
    for m in sorted((m for m in measurements if m.kind == kind),
                    key=lambda m: (m.commanded, m.robot)):
        theta = compute_theta(m)
        by_cmd[abs(m.commanded)].append(theta)
        rows.append({"robot": m.robot, "kind": kind, "commanded": m.commanded,
                     "mean": statistics.fmean(m.samples),
                     "sd": statistics.stdev(m.samples) if len(m.samples) > 1 else 0.0,
                     "theta": theta})
    if not by_cmd:
        return None, rows
    brackets = []
    for cmd in sorted(by_cmd):
        try:
            pop = fit_population(by_cmd[cmd])
        except CalibrationError as exc:
            raise CalibrationError(f"{kind} bracket {cmd:g}: {exc}") from None
        brackets.append(Bracket(cmd, pop.mu, pop.sigma))
    return FactorDistribution(tuple(brackets)), rows


def calibrate(measurements, detection_trials=None, inflation_factor: float = 2.0,
              threshold: float = 0.8, false_positive_rate: float | None = None,
              false_negative_rate: float | None = None) -> CalibrationBundle:
    if inflation_factor < 1:
        raise CalibrationError(f"inflation factor {inflation_factor} < 1 would make the "
                               "simulated agents better than the measured robots")
    speed, speed_rows = fit_brackets(measurements, "speed")
    turn, turn_rows = fit_brackets(measurements, "turn")
    warnings = []
    if speed is None:
        warnings.append("no speed measurements; simulator speed factors stay at defaults")
    if turn is None:
        warnings.append("no turn-rate measurements; simulator turn factors stay at defaults")

    noise = {}
    if false_positive_rate is not None:
        noise["false_positive_rate"] = false_positive_rate
    if false_negative_rate is not None:
        noise["false_negative_rate"] = false_negative_rate
    if detection_trials:
        sensor = SensorModel(fov=fit_detection_polygon(detection_trials, threshold), **noise)
    else:
        warnings.append("no detection data; using the default cone FOV")
        sensor = SensorModel(fov=Cone(), **noise)
    return CalibrationBundle(speed, turn, inflation_factor, sensor,
                             speed_rows + turn_rows, warnings)


def bundled_speed_path() -> Path:
    """Bundled speed samples reproducing the Flockbot speed table."""
    return Path(__file__).with_name("data") / "flockbot_speed.csv"
