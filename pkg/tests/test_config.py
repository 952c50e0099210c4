import json

import pytest

from rsrs.calibration import calibrate, read_rate_csv, bundled_speed_path
from rsrs.config import (FLOCKBOT_SPEED, Bracket, ConfigError, FactorDistribution, Polygon,
                         SensorModel, TrialConfig, load_config)


def test_invariants():
    with pytest.raises(ConfigError):
        TrialConfig(dt=0)
    with pytest.raises(ConfigError):
        TrialConfig(duration=0.1, dt=0.13)
    with pytest.raises(ConfigError):
        TrialConfig(n_agents=0)
    with pytest.raises(ConfigError):
        TrialConfig(inflation_factor=0.9)
    with pytest.raises(ConfigError):
        SensorModel(false_positive_rate=1.5)
    with pytest.raises(ConfigError):
        Polygon(((0, 0), (1, 1), (1, 0), (0, 1)))  # bow tie


def test_tick_count():
    assert TrialConfig(duration=300, dt=0.13).n_ticks == 2308
    assert TrialConfig(duration=0.13, dt=0.13).n_ticks == 1
    assert TrialConfig(duration=0.39, dt=0.13).n_ticks == 3


def test_round_trip_and_digest(tmp_path):
    cfg = TrialConfig(v=0.2, seed=5, sensor=SensorModel(Polygon(((0, 0), (1, -0.2), (1, 0.2)))))
    again = TrialConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.digest() == cfg.digest()
    assert TrialConfig(seed=6).digest() != TrialConfig(seed=5).digest()
    p = tmp_path / "c.yaml"
    p.write_text("v: 0.1\nomega: 0.5\nsensor: {kind: cone, range: 0.6}\n")
    c = load_config(p)
    assert (c.v, c.omega, c.sensor.fov.range) == (0.1, 0.5, 0.6)


def test_unknown_field_rejected():
    with pytest.raises(ConfigError):
        TrialConfig.from_dict({"speed": 1})


def test_bracket_interpolation():
    d = FactorDistribution((Bracket(0.05, 0.97, 0.002), Bracket(0.025, 0.88, 0.018)))
    assert d.at(0.025).mu == 0.88
    assert d.at(0.0375).mu == pytest.approx(0.925)
    assert d.at(0.15).mu == 0.97 and d.at(0.001).mu == 0.88
    assert d.at(-0.05).mu == 0.97


def test_inflated_population():
    cfg = TrialConfig(v=0.025, inflation_factor=2.0)
    pop = cfg.speed_population()
    assert pop.sigma == pytest.approx(2 * FLOCKBOT_SPEED.at(0.025).sigma)


def test_flockbot_defaults_match_calibration():
    bundle = calibrate(read_rate_csv(bundled_speed_path()))
    assert bundle.speed == FLOCKBOT_SPEED
