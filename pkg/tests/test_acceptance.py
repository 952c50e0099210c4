"""Acceptance criteria, one test each, at their stated tolerances.

Each test prints a single ``[ACCEPT] <criterion>: PASS|FAIL`` line (shown
even under output capture) before asserting.
"""

import hashlib
import json
import math
import os
import time

import numpy as np
import pytest

from rsrs import cli
from rsrs.calibration import calibrate, read_rate_csv, bundled_speed_path
from rsrs.config import (ActuationBounds, AgentState, Cone, FactorDistribution, SensorModel,
                         TrialConfig)
from rsrs.core import run_trial
from rsrs.metrics import PHASES, Phase, milling_order
from rsrs.reachability import check_containment, sample_cloud, straight_run
from rsrs.sensing import apply_noise
from rsrs.sweep import SweepSpec, recommend, run_sweep

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[ACCEPT] {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        assert ok, f"{name}: {detail}"
    return emit


def test_1_calibration_fidelity(report):
    t0 = time.perf_counter()
    bundle = calibrate(read_rate_csv(bundled_speed_path()))
    got = [round(r["theta"], 2) for r in bundle.thetas]
    want = [0.89, 0.86, 0.89, 0.97, 0.97, 0.97]
    elapsed = time.perf_counter() - t0
    report("1 calibration fidelity", got == want and elapsed < 1.0,
           f"thetas={got} ({elapsed:.2f} s)")


def test_2_milling_reproduction(report):
    t0 = time.perf_counter()
    bundle = calibrate(read_rate_csv(bundled_speed_path()), inflation_factor=2.0)
    base = TrialConfig(n_agents=9, v=0.15, omega=0.75, dt=0.13, duration=300.0,
                       speed_distribution=bundle.speed, inflation_factor=2.0)
    labels = [run_trial(base.replace(seed=s)).phase for s in range(20)]
    share = labels.count(Phase.STABLE_MILLING) / len(labels)
    elapsed = time.perf_counter() - t0
    report("2 milling reproduction", share >= 0.7,
           f"StableMilling {share:.0%} of 20 seeds ({elapsed:.1f} s)")


@pytest.mark.slow
def test_3_four_phase_emergence(report):
    t0 = time.perf_counter()
    spec = SweepSpec(axes=(("v", (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)),
                           ("omega", (0.25, 0.5, 0.75, 1.0, 1.25, 1.5))),
                     seeds_per_cell=20, base=TrialConfig(n_agents=9))
    diagram = run_sweep(spec, workers=os.cpu_count() or 1)
    elapsed = time.perf_counter() - t0
    seen = {p for c in diagram.cells for p in c.labels if p is not None}
    rec = recommend(diagram, Phase.STABLE_MILLING)
    point = diagram.cell_at(v=0.15, omega=0.75)
    ok = (seen == set(PHASES) and rec.fraction >= 0.7
          and point.modal == Phase.STABLE_MILLING and elapsed < 600)
    report("3 four-phase emergence", ok,
           f"phases={sorted(p.value for p in seen)} recommend={rec.cell.values} "
           f"B_s={rec.fraction:.2f} (0.15,0.75) modal={point.modal.value} "
           f"B_s={point.b_s:.2f} ({elapsed:.0f} s)")


def test_4_reachability_gate(report):
    t0 = time.perf_counter()
    bundle = calibrate(read_rate_csv(bundled_speed_path()), inflation_factor=2.0)
    cfg = TrialConfig(v=0.025, omega=0.0, speed_distribution=bundle.speed,
                      inflation_factor=2.0, seed=0)
    duration = 30.0
    cloud = sample_cloud(AgentState(0.0, 0.0, 0.0), cfg, duration, n_rollouts=10_000,
                         bounds=ActuationBounds(0.025, 0.025, 0.0, 0.0))
    tol = (0.05, 0.15)
    inside = check_containment(straight_run(0.02215, duration, cfg.dt), cloud, tol)
    outside = check_containment(straight_run(0.030, duration, cfg.dt), cloud, tol)
    elapsed = time.perf_counter() - t0
    report("4 reachability gate", inside.passed and not outside.passed and elapsed < 30,
           f"22.15 mm/s {inside.verdict}, 30 mm/s {outside.verdict} ({elapsed:.1f} s)")


def _digests(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*"))
            if p.is_file() and p.suffix in (".csv", ".jsonl")}


def test_5_determinism(report, tmp_path):
    t0 = time.perf_counter()
    spec = tmp_path / "sweep.json"
    spec.write_text(json.dumps({"axes": {"v": [0.1, 0.15], "omega": [0.5, 0.75]},
                                "seeds_per_cell": 3, "base": {"duration": 40.0}}))
    runs = {}
    for name, workers in (("a1", 1), ("b1", 1), ("a4", 4), ("b4", 4)):
        out = tmp_path / name
        assert cli.main(["sweep", str(spec), "--workers", str(workers), "--seed", "7",
                         "--keep-trajectories", "-o", str(out)]) == 0
        assert cli.main(["simulate", "--seed", "7", "--duration", "40",
                         "-o", str(out / "sim")]) == 0
        runs[name] = _digests(out)
    first = runs["a1"]
    same = all(r == first for r in runs.values())
    elapsed = time.perf_counter() - t0
    report("5 determinism", same and len(first) > 10 and elapsed < 120,
           f"{len(first)} files x {len(runs)} runs, workers {{1, 4}} ({elapsed:.1f} s)")


def test_6_analytic_oracles(report):
    t0 = time.perf_counter()
    # (a) noise-free lone agent with unit factors: every tick lands within the
    # one-step Euler bound v*omega*dt^2/2 of the exact arc from the previous
    # state, and the polygon it traces has circumradius v/omega + O(dt^2)
    v, omega, dt = 0.15, 0.75, 0.13
    unit = FactorDistribution.single(1.0, 0.0)
    cfg = TrialConfig(n_agents=1, v=v, omega=omega, dt=dt, duration=60.0,
                      speed_distribution=unit, turn_distribution=unit,
                      sensor=SensorModel(Cone(), 0.0, 0.0))
    s = run_trial(cfg, classify_phase=False).states[:, 0]
    w = -omega  # a lone agent sees nothing and turns right
    R = v / w
    h0, h1 = s[:-1, 2], s[:-1, 2] + w * dt
    exact = np.column_stack([s[:-1, 0] + R * (np.sin(h1) - np.sin(h0)),
                             s[:-1, 1] - R * (np.cos(h1) - np.cos(h0))])
    step_err = np.hypot(*(s[1:, :2] - exact).T).max()
    a = omega * dt
    circum = v * dt / (2 * math.sin(a / 2))
    ok_a = step_err <= v * omega * dt ** 2 / 2 + 1e-12 and abs(circum - v / omega) <= v * omega * dt ** 2
    # (b) perfect tangential ring
    ang = np.linspace(0, 2 * math.pi, 9, endpoint=False)
    pos = np.stack([np.cos(ang), np.sin(ang)], axis=1)[None].repeat(3, axis=0)
    ring = milling_order(pos, (ang + math.pi / 2)[None].repeat(3, axis=0))
    ok_b = abs(ring - 1.0) <= 1e-9
    # (c) uniform headings over 10^4 agent-ticks
    rng = np.random.default_rng(0)
    upos = rng.uniform(-1, 1, (2, 5000, 2))
    uni = milling_order(upos, rng.uniform(-math.pi, math.pi, (2, 5000)))
    ok_c = abs(uni - 1 / math.pi) <= 0.02
    # (d) phantom rate with nothing in view over 10^5 draws
    sensor = SensorModel(Cone(), false_positive_rate=0.065, false_negative_rate=0.0)
    out = apply_noise(np.zeros(100_000, bool), rng.random(100_000), sensor)
    rate = float(out.mean())
    ok_d = 0.06 <= rate <= 0.07
    elapsed = time.perf_counter() - t0
    report("6 analytic oracles", ok_a and ok_b and ok_c and ok_d and elapsed < 60,
           f"(a) step err {step_err:.2e} (b) {ring:.12f} (c) {uni:.4f} (d) {rate:.4f} "
           f"({elapsed:.1f} s)")
