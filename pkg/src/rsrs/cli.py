"""``rsrs`` command line: calibrate, simulate, sweep, recommend, validate, render.

Exit codes: 0 success, 1 other errors, 2 validation failure, 3 capability
abort (nothing viable to recommend, or a sensor that detects nothing).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

from . import calibration, reachability, render, sweep
from .config import ActuationBounds, AgentState, ConfigError, TrialConfig, read_structured
from .core import SimulationError, run_trial, write_jsonl
from .metrics import Phase

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_ABORT = 0, 1, 2, 3

OVERRIDES = {  # flag dest -> (config key, type)
    "n_agents": ("n_agents", int), "v": ("v", float), "omega": ("omega", float),
    "dt": ("dt", float), "duration": ("duration", float),
    "inflate": ("inflation_factor", float), "seed": ("seed", int),
    "jitter": ("jitter_sd", float),
}


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_manifest(out_dir, command: str, config_hash: str, root_seed: int | None,
                   inputs, started: datetime) -> None:
    manifest = {
        "command": command,
        "config_hash": config_hash,
        "tool_version": tool_version(),
        "root_seed": root_seed,
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "inputs": {str(p): file_digest(p) for p in inputs if p},
    }
    atomic_write(Path(out_dir) / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def pretty(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# Config assembly: file < calibration params < flags


def params_fragment(path) -> dict:
    data = read_structured(path)
    return data["config"] if "config" in data and isinstance(data["config"], dict) else data


def assemble_config(args, base: dict | None = None) -> TrialConfig:
    d = dict(base or {})
    if getattr(args, "config", None):
        d.update(read_structured(args.config))
        if "base" in d and "axes" in d:
            d = dict(d["base"])
    if getattr(args, "params", None):
        d.update(params_fragment(args.params))
    for dest, (key, typ) in OVERRIDES.items():
        val = getattr(args, dest, None)
        if val is not None:
            d[key] = typ(val)
    return TrialConfig.from_dict(d)


def add_overrides(p, seed: bool = True) -> None:
    p.add_argument("--config", help="trial config (YAML or JSON)")
    p.add_argument("--params", help="calibration output to merge into the config")
    p.add_argument("-N", "--n-agents", dest="n_agents", type=int)
    p.add_argument("--v", type=float, help="forward speed (m/s)")
    p.add_argument("--omega", type=float, help="turn rate (rad/s)")
    p.add_argument("--dt", type=float)
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--inflate", type=float, help="sigma inflation factor")
    p.add_argument("--jitter", type=float, help="per-tick factor jitter sd")
    if seed:
        p.add_argument("--seed", type=int)


# --------------------------------------------------------------------------
# Subcommands


def cmd_calibrate(args) -> int:
    measurements = []
    for path in (args.speed_csv, args.turn_csv):
        if path:
            measurements += calibration.read_rate_csv(path, speed_scale=args.speed_scale)
    if not measurements and not args.detect_csv:
        raise calibration.CalibrationError("nothing to calibrate: give --speed-csv, "
                                           "--turn-csv or --detect-csv")
    trials = calibration.read_detection_csv(args.detect_csv) if args.detect_csv else None
    bundle = calibration.calibrate(measurements, trials, args.inflate, args.threshold,
                                   args.fp, args.fn)
    if args.margin and bundle.sensor is not None and trials:
        from .config import SensorModel
        from .sensing import shrink_polygon
        s = bundle.sensor
        bundle.sensor = SensorModel(shrink_polygon(s.fov, args.margin),
                                    s.false_positive_rate, s.false_negative_rate)
    for w in bundle.warnings:
        print(f"warning: {w}", file=sys.stderr)
    text = pretty(bundle.to_dict())
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = datetime.now(timezone.utc)
    cfg = assemble_config(args)
    res = run_trial(cfg, n_ticks=args.ticks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "trajectory.jsonl", res.trajectory_records(args.log_every))
    write_jsonl(out / "events.jsonl", res.event_records())
    (out / "metrics.json").write_text(pretty(res.summary()))
    (out / "config.json").write_text(pretty(cfg.to_dict()))
    if args.render:
        (out / "frames.svg").write_text(
            render.trajectory_strip(res.states, cfg.arena, cfg.collision_radius))
    write_manifest(out, "simulate", cfg.digest(), cfg.seed, [args.config, args.params], started)
    print(json.dumps({"phase": res.summary()["phase"], "metrics": res.summary()["metrics"]}))
    return EXIT_OK


def cmd_sweep(args) -> int:
    started = datetime.now(timezone.utc)
    data = read_structured(args.spec)
    base = dict(data.get("base", {}))
    if args.params:
        base.update(params_fragment(args.params))
    if args.seed is not None:
        base["seed"] = args.seed
    data["base"] = base
    if args.seeds is not None:
        data["seeds_per_cell"] = args.seeds
    spec = sweep.SweepSpec.from_dict(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records: list = []

    def progress(done, total):
        if args.progress:
            print(f"\r{done}/{total} cells", end="" if done < total else "\n", file=sys.stderr)

    diagram = sweep.run_sweep(spec, workers=args.workers,
                              keep_dir=out if args.keep_trajectories else None,
                              log_every=args.log_every, progress=progress,
                              records_out=records)
    overlay = sweep.read_overlay(args.overlay) if args.overlay else ()
    sweep.export_diagram(diagram, "csv", out / "diagram.csv")
    sweep.export_diagram(diagram, "svg", out / "diagram.svg", overlay)
    sweep.write_trial_records(records, out / "trials.jsonl")
    (out / "sweep.json").write_text(pretty(spec.to_dict()))
    errors = sum(c.n_errors for c in diagram.cells)
    write_manifest(out, "sweep", sweep.config_digest_of(spec), spec.root_seed,
                   [args.spec, args.params, args.overlay], started)
    print(sweep.diagram_summary(diagram))
    if errors:
        print(f"warning: {errors} trial(s) failed; see trials.jsonl", file=sys.stderr)
    return EXIT_OK


def cmd_recommend(args) -> int:
    diagram = sweep.read_diagram_csv(args.diagram)
    rec = sweep.recommend(diagram, Phase(args.target))
    print(json.dumps(rec.to_dict(diagram.axis_names)))
    return EXIT_OK


def cmd_validate(args) -> int:
    started = datetime.now(timezone.utc)
    cfg = assemble_config(args)
    real = reachability.read_trajectory_csv(args.trajectory)
    b = cfg.actuation
    bounds = ActuationBounds(*(args.u1 or (b.u1_min, b.u1_max)),
                             *(args.u2 or (b.u2_min, b.u2_max)))
    horizon = args.horizon or max(real.duration, cfg.dt)
    z0 = real.start
    cloud = reachability.sample_cloud(AgentState(z0.x, z0.y, z0.heading), cfg, horizon,
                                      args.rollouts, bounds)
    report = reachability.check_containment(real, cloud, (args.tol_pos, args.tol_heading))
    text = pretty(report.to_dict())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
        write_manifest(out, "validate", cfg.digest(), cfg.seed,
                       [args.trajectory, args.config, args.params], started)
    print(json.dumps(report.to_dict()["summary"] | {"verdict": report.verdict}))
    return EXIT_OK if report.passed else EXIT_INVALID


def cmd_render(args) -> int:
    src = Path(args.input)
    if src.suffix == ".jsonl":
        import numpy as np
        recs = [json.loads(line) for line in src.read_text().splitlines() if line]
        ticks = sorted({r["tick"] for r in recs})
        n = max(r["id"] for r in recs) + 1
        states = np.zeros((len(ticks), n, 3))
        pos = {t: k for k, t in enumerate(ticks)}
        for r in recs:
            states[pos[r["tick"]], r["id"]] = (r["x"], r["y"], r["heading"])
        cfg = assemble_config(args)
        svg = render.trajectory_strip(states, cfg.arena, cfg.collision_radius, args.frames)
    else:
        diagram = sweep.read_diagram_csv(src)
        overlay = sweep.read_overlay(args.overlay) if args.overlay else ()
        svg = render.diagram_svg(diagram, overlay)
    out = Path(args.out) if args.out else src.with_suffix(".svg")
    out.write_text(svg)
    print(out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsrs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=tool_version())
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="fit idiosyncrasy and sensor parameters")
    c.add_argument("--speed-csv", help="robot,kind,commanded,sample rows")
    c.add_argument("--turn-csv", help="same layout, kind=turn (rad/s)")
    c.add_argument("--detect-csv", help="x,y,hits,attempts rows in the sensor frame")
    c.add_argument("--flockbot", action="store_true",
                   help="use the bundled Flockbot speed samples as --speed-csv")
    c.add_argument("--inflate", type=float, default=2.0)
    c.add_argument("--threshold", type=float, default=0.8)
    c.add_argument("--margin", type=float, default=0.0, help="inward polygon offset (m)")
    c.add_argument("--speed-scale", type=float, default=1e-3,
                   help="multiplier from file speed units to m/s (default mm/s)")
    c.add_argument("--fp", type=float, help="false positive rate")
    c.add_argument("--fn", type=float, help="false negative rate")
    c.add_argument("-o", "--out", help="write parameters here instead of stdout")
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", help="run one trial")
    add_overrides(s)
    s.add_argument("--ticks", type=int, help="run exactly this many ticks")
    s.add_argument("--log-every", type=int, default=1)
    s.add_argument("--render", action="store_true", help="also write frames.svg")
    s.add_argument("-o", "--out", default="run")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="grid sweep to a phase diagram")
    w.add_argument("spec", help="sweep file: axes, seeds_per_cell, base")
    w.add_argument("--params", help="calibration output merged into the base config")
    w.add_argument("--seed", type=int, help="root seed")
    w.add_argument("--seeds", type=int, help="override seeds_per_cell")
    w.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $RSRS_WORKERS or 1)")
    w.add_argument("--keep-trajectories", action="store_true")
    w.add_argument("--log-every", type=int, default=10)
    w.add_argument("--overlay", help="CSV of real outcomes: axis columns plus phase")
    w.add_argument("--progress", action="store_true")
    w.add_argument("-o", "--out", default="sweep")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("recommend", help="pick the most reliable cell for a phase")
    r.add_argument("diagram", help="diagram.csv from a sweep")
    r.add_argument("--target", default=Phase.STABLE_MILLING.value,
                   choices=[p.value for p in Phase])
    r.set_defaults(func=cmd_recommend)

    v = sub.add_parser("validate", help="check a real trajectory against the reachable set")
    v.add_argument("trajectory", help="t,x,y,heading CSV")
    add_overrides(v)
    v.add_argument("--rollouts", type=int, default=10_000)
    v.add_argument("--horizon", type=float, help="seconds (default: trajectory length)")
    v.add_argument("--tol-pos", type=float, default=reachability.DEFAULT_TOL[0])
    v.add_argument("--tol-heading", type=float, default=reachability.DEFAULT_TOL[1])
    v.add_argument("--u1", type=float, nargs=2, metavar=("MIN", "MAX"),
                   help="forward command range for rollouts")
    v.add_argument("--u2", type=float, nargs=2, metavar=("MIN", "MAX"),
                   help="turn command range for rollouts")
    v.add_argument("-o", "--out", help="directory for report.json and manifest")
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("render", help="SVG from a diagram CSV or trajectory JSONL")
    d.add_argument("input")
    d.add_argument("--overlay")
    d.add_argument("--config")
    d.add_argument("--frames", type=int, default=6)
    d.add_argument("-o", "--out")
    d.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "flockbot", False) and not args.speed_csv:
        args.speed_csv = str(calibration.bundled_speed_path())
    try:
        return args.func(args)
    except (sweep.CapabilityAbort, calibration.SensorNotViable) as exc:
        print(f"abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ConfigError, calibration.CalibrationError, reachability.ReachabilityError,
            SimulationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
