import math
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsrs.calibration import (CalibrationError, DetectionTrial, SensorNotViable,
                              SpeedMeasurement, calibrate, compute_theta, fit_detection_polygon,
                              fit_population, inflate, read_detection_csv, read_rate_csv,
                              bundled_speed_path)
from rsrs.config import ActuationBounds, AgentState, Cone, PopulationDistribution, TrialConfig
from rsrs.reachability import check_containment, sample_cloud, straight_run
from rsrs.rng import truncated_normal
from rsrs.sensing import point_in_polygon

# Flockbot speed table: (commanded mm/s, robot mean, robot sd)
TABLE = [(25, 22.15, 0.57), (25, 21.48, 0.04), (25, 22.32, 0.46),
         (50, 48.47, 0.38), (50, 48.66, 0.12), (50, 48.54, 0.20)]


def test_theta_examples():
    assert compute_theta(SpeedMeasurement("a", 25, (22.15,))) == pytest.approx(0.886)
    assert compute_theta(SpeedMeasurement("a", 50, (48.47,))) == pytest.approx(0.9694)
    assert compute_theta(SpeedMeasurement("a", 30, (30.0, 30.0))) == 1.0


def test_theta_zero_command():
    with pytest.raises(CalibrationError):
        compute_theta(SpeedMeasurement("a", 0, (1.0,)))


@given(st.lists(st.floats(1, 100), min_size=1, max_size=10), st.floats(1, 100),
       st.floats(0.01, 100))
def test_theta_scale_consistent(samples, cmd, c):
    a = compute_theta(SpeedMeasurement("r", cmd, tuple(samples)))
    b = compute_theta(SpeedMeasurement("r", cmd * c, tuple(s * c for s in samples)))
    assert a == pytest.approx(b, rel=1e-12)


def test_fit_population_examples():
    p = fit_population([0.89, 0.86, 0.89])
    assert p.mu == pytest.approx(0.88)
    assert p.sigma == pytest.approx(math.sqrt(((0.01**2) * 2 + 0.02**2) / 2))  # ~0.0173
    assert fit_population([1.0, 1.0]) == PopulationDistribution(1.0, 0.0)


@given(st.lists(st.floats(0.5, 1.5), min_size=2, max_size=12), st.randoms())
def test_fit_population_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert fit_population(xs) == fit_population(ys)


def test_inflate():
    assert inflate(PopulationDistribution(0.88, 0.02), 2) == PopulationDistribution(0.88, 0.04)
    d = PopulationDistribution(0.88, 0.02)
    assert inflate(d, 1) == d
    with pytest.raises(CalibrationError):
        inflate(d, 0.5)


@given(st.floats(0.1, 2), st.floats(0, 1), st.floats(1, 10))
def test_inflate_never_shrinks(mu, sigma, k):
    assert inflate(PopulationDistribution(mu, sigma), k).sigma >= sigma


def test_inflated_samples_spread_wider():
    pop = PopulationDistribution(0.88, 0.0173)
    x = truncated_normal(inflate(pop, 2), np.random.default_rng(0).random(10_000))
    assert x.std() >= pop.sigma


def test_table_rows_reproduce_thetas():
    ms = read_rate_csv(bundled_speed_path())
    by_robot = {(m.robot, round(m.commanded * 1000)): m for m in ms}
    for k, (cmd, mean, sd) in enumerate(TABLE):
        m = by_robot[(f"v{k % 3 + 1}", cmd)]
        assert statistics.fmean(m.samples) * 1000 == pytest.approx(mean)
        assert statistics.stdev(m.samples) * 1000 == pytest.approx(sd)
        assert compute_theta(m) == pytest.approx(mean / cmd)


def test_calibrate_brackets_and_warnings():
    b = calibrate(read_rate_csv(bundled_speed_path()))
    at25, at50 = b.speed.brackets
    assert round(at25.mu, 2) == 0.88 and round(at50.mu, 2) == 0.97
    assert isinstance(b.sensor.fov, Cone)
    assert any("detection" in w for w in b.warnings)
    assert any("turn" in w for w in b.warnings)
    frag = b.config_fragment()
    cfg = TrialConfig.from_dict(frag)
    assert cfg.speed_distribution == b.speed and cfg.inflation_factor == 2.0
    report = b.to_dict()["report"]
    assert report["inflated"]["speed"][0]["sigma"] == pytest.approx(2 * at25.sigma)
    b1 = calibrate(read_rate_csv(bundled_speed_path()), inflation_factor=1.0)
    assert b1.to_dict()["report"]["inflated"]["speed"][0]["sigma"] == at25.sigma


def test_bad_rows_carry_line_numbers(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("robot,kind,commanded,sample\nv1,speed,25,22\nv1,speed,25,abc\n")
    with pytest.raises(CalibrationError, match=r"s\.csv:3"):
        read_rate_csv(p)
    q = tmp_path / "d.csv"
    q.write_text("x,y,hits,attempts\n0.1,0,9,10\n0.2,0,11,10\n")
    with pytest.raises(CalibrationError, match="3"):
        read_detection_csv(q)


# --- detection polygon ----------------------------------------------------


def fan_trials(rate_fn, ranges=np.arange(0.1, 1.01, 0.1), bearings=np.radians(np.arange(-40, 41, 10))):
    trials = []
    for b in bearings:
        for r in ranges:
            hits = int(round(10 * rate_fn(r, b)))
            trials.append(DetectionTrial(r * math.cos(b), r * math.sin(b), hits, 10))
    return trials


def test_uniform_fan_gives_sector():
    trials = fan_trials(lambda r, b: 1.0 if r <= 0.6 + 1e-9 and abs(b) <= math.radians(20) + 1e-9
                        else 0.0)
    poly = fit_detection_polygon(trials)
    assert poly.max_range == pytest.approx(0.6)
    angles = sorted(round(math.degrees(math.atan2(y, x))) for x, y in poly.vertices if x or y)
    assert angles == [-20, -10, 0, 10, 20]


def test_range_limited_data():
    trials = fan_trials(lambda r, b: 0.95 if r <= 0.4 + 1e-9 else 0.3)
    assert abs(fit_detection_polygon(trials).max_range - 0.4) <= 0.1


def test_weak_cell_excluded():
    trials = fan_trials(lambda r, b: 0.7 if (abs(r - 0.5) < 1e-9 and abs(b) < 1e-9) else 1.0)
    poly = fit_detection_polygon(trials, 0.8)
    assert not point_in_polygon(0.5, 0.0, poly)
    assert point_in_polygon(0.35, 0.0, poly)


def test_nothing_passes():
    with pytest.raises(SensorNotViable):
        fit_detection_polygon(fan_trials(lambda r, b: 0.2))


def test_blind_ahead_is_not_viable():
    with pytest.raises(SensorNotViable):
        fit_detection_polygon(fan_trials(lambda r, b: 0.0 if abs(b) < 1e-9 else 1.0))


def test_run_around_ahead_is_kept():
    # a longer passing run off to the side loses to the one straight ahead
    passing = {-40, -30, -20, 0, 10}
    poly = fit_detection_polygon(fan_trials(
        lambda r, b: 1.0 if round(math.degrees(b)) in passing else 0.0))
    angles = sorted(round(math.degrees(math.atan2(y, x))) for x, y in poly.vertices if x or y)
    assert angles == [0, 10]


@given(st.integers(0, 2**32), st.floats(0.3, 0.9), st.floats(0.05, 0.3))
def test_polygon_shrinks_with_threshold(seed, lo, step):
    rng = np.random.default_rng(seed)
    table = rng.random((9, 10))
    trials = fan_trials(lambda r, b: table[int(round(math.degrees(b) / 10)) + 4,
                                           int(round(r * 10)) - 1])
    hi = min(lo + step, 1.0)
    try:
        tight = fit_detection_polygon(trials, hi)
    except SensorNotViable:
        return
    loose = fit_detection_polygon(trials, lo)
    pts = rng.uniform(-0.2, 1.0, (400, 2))
    for x, y in pts:
        if point_in_polygon(x, y, tight):
            assert point_in_polygon(x, y, loose)


# --- end to end -----------------------------------------------------------


@pytest.mark.parametrize("cmd", [25, 50])
def test_calibrated_model_contains_measured_runs(cmd):
    bundle = calibrate(read_rate_csv(bundled_speed_path()))
    cfg = TrialConfig.from_dict(bundle.config_fragment()).replace(v=cmd / 1000, omega=0.0)
    u = cmd / 1000
    duration = 2.0 / u * 0.9  # a 2 m track
    cloud = sample_cloud(AgentState(0, 0, 0), cfg, duration, 10_000,
                         ActuationBounds(u, u, 0.0, 0.0))
    for c, mean, _ in TABLE:
        if c == cmd:
            real = straight_run(mean / 1000, duration, 0.5)
            assert check_containment(real, cloud).passed
