"""Monte-Carlo reachable sets and the real-in-simulated containment check.

A cloud is a bank of single-agent rollouts from a shared start state, each
with its own idiosyncrasy draw and a uniformly random admissible control
sequence. Real trajectories are resampled onto the cloud's tick grid and
each resampled point must have some simulated sample nearby.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kinematics
from .config import ActuationBounds, AgentState, TrialConfig
from .core import MIN_FACTOR
from .rng import derive_seed, truncated_normal

DEFAULT_TOL = (0.05, 0.15)
ROLLOUT_STREAM = 4  # matches the position of "rollout" in rng.SUBSYSTEMS


class ReachabilityError(ValueError):
    pass


@dataclass(frozen=True)
class RealTrajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        if n < 1 or not (len(self.x) == len(self.y) == len(self.heading) == n):
            raise ReachabilityError("trajectory columns must be non-empty and equal length")
        if np.any(np.diff(self.t) <= 0):
            raise ReachabilityError("trajectory times must be strictly increasing")

    @classmethod
    def from_arrays(cls, t, x, y, heading) -> "RealTrajectory":
        return cls(*(np.asarray(a, dtype=float) for a in (t, x, y, heading)))

    @property
    def start(self) -> AgentState:
        return AgentState(float(self.x[0]), float(self.y[0]), float(self.heading[0]))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def at(self, times: np.ndarray) -> np.ndarray:
        """Linear interpolation to ``times`` (relative to the first record); (k, 3)."""
        rel = self.t - self.t[0]
        h = np.unwrap(self.heading)
        out = np.column_stack([np.interp(times, rel, self.x), np.interp(times, rel, self.y),
                               np.interp(times, rel, h)])
        out[:, 2] = kinematics.normalize_angle(out[:, 2])
        return out


def read_trajectory_csv(path) -> RealTrajectory:
    """Read ``t,x,y,heading`` rows (seconds, meters, radians)."""
    cols: dict[str, list[float]] = {k: [] for k in ("t", "x", "y", "heading")}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                for k in cols:
                    cols[k].append(float(row[k]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ReachabilityError(f"{path}:{reader.line_num}: unparseable row ({exc})") \
                    from None
    return RealTrajectory.from_arrays(cols["t"], cols["x"], cols["y"], cols["heading"])


def write_trajectory_csv(path, traj: RealTrajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "heading"])
        for row in zip(traj.t, traj.x, traj.y, traj.heading):
            w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class ReachableCloud:
    """``samples[k]`` holds every rollout's state at time ``k * dt``."""

    samples: np.ndarray          # (T + 1, n_rollouts, 3)
    dt: float
    factors: np.ndarray = field(repr=False, default=None)   # (n_rollouts, 2)

    @property
    def n_buckets(self) -> int:
        return self.samples.shape[0]

    @property
    def n_rollouts(self) -> int:
        return self.samples.shape[1]

    @property
    def horizon(self) -> float:
        return (self.n_buckets - 1) * self.dt

    def bucket(self, k: int) -> np.ndarray:
        return self.samples[k]


def sample_cloud(z0: AgentState, config: TrialConfig, horizon: float, n_rollouts: int = 10_000,
                 bounds: ActuationBounds | None = None) -> ReachableCloud:
    """Roll ``n_rollouts`` agents forward for ``ceil(horizon / dt)`` ticks.

    Factors come from the config's inflated populations (evaluated at the
    config's ``v`` and ``omega``); controls are drawn uniformly within
    ``bounds`` (default: the config's actuation bounds) and held for one
    tick. Agents move in free space. Each ingredient draws from its own
    positional stream, so a larger cloud extends a smaller one.
    """
    if n_rollouts < 1:
        raise ReachabilityError("n_rollouts must be >= 1")
    dt = config.dt
    if horizon < dt - 1e-12:
        raise ReachabilityError(f"horizon {horizon} s is shorter than one tick ({dt} s)")
    bounds = bounds or config.actuation
    T = max(1, math.ceil(horizon / dt - 1e-9))

    gens = [np.random.default_rng(derive_seed(config.seed, ROLLOUT_STREAM, k))
            for k in range(4)]
    factors = np.column_stack([
        truncated_normal(config.speed_population(), gens[0].random(n_rollouts)),
        truncated_normal(config.turn_population(), gens[1].random(n_rollouts)),
    ])
    lo = np.array([bounds.u1_min, bounds.u2_min])
    hi = np.array([bounds.u1_max, bounds.u2_max])
    u = lo + (hi - lo) * gens[2].random((n_rollouts, T, 2))

    samples = np.empty((T + 1, n_rollouts, 3))
    samples[0] = (z0.x, z0.y, kinematics.normalize_angle(z0.heading))
    for t in range(T):
        f = factors
        if config.jitter_sd > 0:
            f = np.maximum(factors + gens[3].normal(0.0, config.jitter_sd, (n_rollouts, 2)),
                           MIN_FACTOR)
        samples[t + 1] = kinematics.integrate_all(samples[t], u[:, t], f, dt)
    return ReachableCloud(samples, dt, factors)


@dataclass(frozen=True)
class Violation:
    time: float
    position_error: float     # of the best-matching sample
    heading_error: float
    magnitude: float          # max of the two errors, each divided by its tolerance

    def to_dict(self) -> dict:
        return {"time": self.time, "position_error": self.position_error,
                "heading_error": self.heading_error, "magnitude": self.magnitude}


@dataclass(frozen=True)
class ContainmentReport:
    passed: bool
    violations: tuple[Violation, ...]
    checked: int
    tol: tuple[float, float]
    max_magnitude: float
    worst_time: float | None

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict,
                "summary": {"checked": self.checked, "violations": len(self.violations),
                            "tol_position": self.tol[0], "tol_heading": self.tol[1],
                            "max_magnitude": self.max_magnitude,
                            "worst_time": self.worst_time},
                "violations": [v.to_dict() for v in self.violations]}


def heading_distance(a, b):
    return np.abs(kinematics.normalize_angle(np.asarray(a) - np.asarray(b)))


def check_containment(real: RealTrajectory, cloud: ReachableCloud,
                      tol: tuple[float, float] = DEFAULT_TOL) -> ContainmentReport:
    """Check every cloud tick covered by ``real`` for a simulated sample within ``tol``.

    A sample matches when its position is within ``tol[0]`` meters and its
    heading within ``tol[1]`` radians. The reported magnitude is the
    smallest, over samples, of the larger tolerance-normalized error; a
    value above 1 is a violation.
    """
    tol_p, tol_h = float(tol[0]), float(tol[1])
    if tol_p <= 0 or tol_h <= 0:
        raise ReachabilityError("tolerances must be > 0")
    n_check = int(math.floor(real.duration / cloud.dt + 1e-9)) + 1
    if n_check > cloud.n_buckets:
        raise ReachabilityError(
            f"trajectory lasts {real.duration:.3f} s but the cloud only covers "
            f"{cloud.horizon:.3f} s; rebuild it with a longer horizon")
    z0 = cloud.samples[0, 0]
    if (math.hypot(real.x[0] - z0[0], real.y[0] - z0[1]) > tol_p
            or heading_distance(real.heading[0], z0[2]) > tol_h):
        raise ReachabilityError("real trajectory does not start at the cloud's initial state")

    times = np.arange(n_check) * cloud.dt
    points = real.at(times)
    violations = []
    worst, worst_t = 0.0, None
    for k, (px, py, ph) in enumerate(points):
        s = cloud.samples[k]
        dp = np.hypot(s[:, 0] - px, s[:, 1] - py)
        dh = heading_distance(s[:, 2], ph)
        score = np.maximum(dp / tol_p, dh / tol_h)
        j = int(np.argmin(score))
        mag = float(score[j])
        if mag > worst:
            worst, worst_t = mag, float(times[k])
        if mag > 1.0:
            violations.append(Violation(float(times[k]), float(dp[j]), float(dh[j]), mag))
    return ContainmentReport(not violations, tuple(violations), n_check, (tol_p, tol_h),
                             worst, worst_t)


def straight_run(speed: float, duration: float, dt: float, z0: AgentState | None = None
                 ) -> RealTrajectory:
    """Synthetic constant-speed straight-line trajectory sampled every ``dt``."""
    z0 = z0 or AgentState(0.0, 0.0, 0.0)
    t = np.arange(int(math.floor(duration / dt + 1e-9)) + 1) * dt
    return RealTrajectory.from_arrays(t, z0.x + speed * t * math.cos(z0.heading),
                                      z0.y + speed * t * math.sin(z0.heading),
                                      np.full(t.shape, z0.heading))
