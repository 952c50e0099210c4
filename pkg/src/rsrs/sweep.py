"""Grid sweeps over controllable parameters and the resulting phase diagrams."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .config import ConfigError, TrialConfig, config_digest, read_structured
from .core import dumps, run_trial, write_jsonl
from .metrics import PHASES, Phase
from .rng import derive_seed

SWEEPABLE = {"v": float, "omega": float, "n_agents": int,
             "inflation_factor": float, "dt": float}
ALIASES = {"w": "omega", "ω": "omega", "n": "n_agents", "N": "n_agents"}


class CapabilityAbort(RuntimeError):
    """No simulated condition produces the target behavior."""

    def __init__(self, target: Phase, fallback: Phase | None):
        self.target = target
        self.fallback = fallback
        seen = f"the most common behavior was {fallback}" if fallback else "no trial completed"
        super().__init__(
            f"no cell produced {target}; {seen}. The simulated agents are not capable of "
            f"the behavior: if reducing injected noise is cheap try that, otherwise upgrade "
            f"the robots (sensing/actuation) and restart from measurement.")


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple[tuple[str, tuple], ...]
    seeds_per_cell: int = 20
    base: TrialConfig = field(default_factory=TrialConfig)

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("sweep needs at least one axis")
        if self.seeds_per_cell < 1:
            raise ConfigError("seeds_per_cell must be >= 1")
        fixed = []
        for name, values in self.axes:
            name = ALIASES.get(name, name)
            if name not in SWEEPABLE:
                raise ConfigError(f"{name!r} is not sweepable; controllable parameters are "
                                  f"{sorted(SWEEPABLE)}")
            if not values:
                raise ConfigError(f"axis {name!r} has no values")
            values = tuple(SWEEPABLE[name](x) for x in values)
            for x in values:  # validate every value against the config invariants
                self.base.replace(**{name: x})
            fixed.append((name, values))
        if len({n for n, _ in fixed}) != len(fixed):
            raise ConfigError("duplicate sweep axis")
        object.__setattr__(self, "axes", tuple(fixed))

    @property
    def root_seed(self) -> int:
        return self.base.seed

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for _, v in self.axes)

    def cells(self):
        """(flat index, grid index, axis values) in row-major order."""
        for flat, idx in enumerate(itertools.product(*(range(n) for n in self.shape))):
            yield flat, idx, tuple(vals[i] for (_, vals), i in zip(self.axes, idx))

    def trial_config(self, flat: int, values: tuple, rep: int) -> TrialConfig:
        changes = {name: x for (name, _), x in zip(self.axes, values)}
        return self.base.replace(seed=derive_seed(self.root_seed, flat, rep), **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        axes = d.pop("axes")
        if isinstance(axes, dict):
            axes = list(axes.items())
        else:
            axes = [(a["name"], a["values"]) for a in axes]
        base = TrialConfig.from_dict(d.pop("base", {}))
        seeds = int(d.pop("seeds_per_cell", 20))
        if d:
            raise ConfigError(f"unknown sweep fields: {sorted(d)}")
        return cls(tuple((ALIASES.get(n, n), tuple(_expand(v))) for n, v in axes), seeds, base)

    def to_dict(self) -> dict:
        return {"axes": [{"name": n, "values": list(v)} for n, v in self.axes],
                "seeds_per_cell": self.seeds_per_cell, "base": self.base.to_dict()}


def _expand(values):
    """Accept an explicit list or ``{start, stop, step}`` (stop inclusive)."""
    if isinstance(values, dict):
        start, stop, step = (float(values[k]) for k in ("start", "stop", "step"))
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(n)]
    return list(values)


def config_digest_of(spec: SweepSpec) -> str:
    return config_digest(spec.to_dict())


def load_sweep(path) -> SweepSpec:
    return SweepSpec.from_dict(read_structured(path))


@dataclass(frozen=True)
class CellResult:
    index: tuple[int, ...]
    values: tuple
    labels: tuple[Phase | None, ...]   # per seed; None marks a failed trial
    errors: tuple[str, ...] = ()

    def count(self, phase: Phase) -> int:
        return sum(1 for lab in self.labels if lab == phase)

    def fraction(self, phase: Phase) -> float:
        return self.count(phase) / len(self.labels)

    @property
    def b_s(self) -> float:
        return self.fraction(Phase.STABLE_MILLING)

    @property
    def n_errors(self) -> int:
        return sum(1 for lab in self.labels if lab is None)

    @property
    def modal(self) -> Phase | None:
        counts = [(self.count(p), -k, p) for k, p in enumerate(PHASES)]
        best = max(counts)
        return best[2] if best[0] > 0 else None


@dataclass(frozen=True)
class PhaseDiagram:
    axes: tuple[tuple[str, tuple], ...]
    seeds_per_cell: int
    root_seed: int
    cells: tuple[CellResult, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for _, v in self.axes)

    @property
    def axis_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.axes)

    def cell_at(self, **values) -> CellResult:
        want = tuple(values[n] for n in self.axis_names)
        for c in self.cells:
            if all(math.isclose(a, b, rel_tol=0, abs_tol=1e-9) for a, b in zip(c.values, want)):
                return c
        raise KeyError(values)

    def modal_phases(self) -> set[Phase]:
        return {c.modal for c in self.cells if c.modal is not None}

    def seed_phases(self) -> set[Phase]:
        return {lab for c in self.cells for lab in c.labels if lab is not None}


# --------------------------------------------------------------------------
# Running


def _run_cell(args) -> tuple[list, list[dict], list[tuple]]:
    spec, flat, idx, values, keep_dir, log_every = args
    labels, records, errors = [], [], []
    for rep in range(spec.seeds_per_cell):
        cfg = spec.trial_config(flat, values, rep)
        rec = {"cell": flat, "index": list(idx),
               **{n: x for (n, _), x in zip(spec.axes, values)},
               "replicate": rep, "seed": cfg.seed}
        try:
            res = run_trial(cfg)
        except Exception as exc:  # recorded per cell; the sweep carries on
            labels.append(None)
            errors.append(f"replicate {rep}: {type(exc).__name__}: {exc}")
            rec.update(phase=None, error=str(exc))
        else:
            labels.append(res.phase)
            rec.update(phase=str(res.phase), metrics=res.metrics.to_dict())
            if keep_dir is not None:
                d = Path(keep_dir) / "trials" / str(flat)
                d.mkdir(parents=True, exist_ok=True)
                write_jsonl(d / f"{rep}.jsonl", res.trajectory_records(log_every))
        records.append(rec)
    return labels, records, errors


def default_workers() -> int:
    return max(1, int(os.environ.get("RSRS_WORKERS", "1")))


def run_sweep(spec: SweepSpec, workers: int | None = None, keep_dir=None,
              log_every: int = 1, progress: Callable[[int, int], None] | None = None,
              records_out: list | None = None) -> PhaseDiagram:
    """Run every (cell, replicate) trial and aggregate the labels per cell.

    Seeds depend only on the root seed and the (cell, replicate) position,
    so results do not depend on ``workers`` or scheduling order.
    """
    workers = workers or default_workers()
    jobs = [(spec, flat, idx, values, keep_dir, log_every)
            for flat, idx, values in spec.cells()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = _collect(pool.map(_run_cell, jobs), len(jobs), progress)
    else:
        outputs = _collect(map(_run_cell, jobs), len(jobs), progress)

    cells = []
    for (_, _, idx, values, _, _), (labels, records, errors) in zip(jobs, outputs):
        cells.append(CellResult(idx, values, tuple(labels), tuple(errors)))
        if records_out is not None:
            records_out.extend(records)
    return PhaseDiagram(spec.axes, spec.seeds_per_cell, spec.root_seed, tuple(cells))


def _collect(results, total, progress):
    out = []
    for k, r in enumerate(results):
        out.append(r)
        if progress:
            progress(k + 1, total)
    return out


# --------------------------------------------------------------------------
# Recommendation


@dataclass(frozen=True)
class Recommendation:
    cell: CellResult
    fraction: float       # share of seeds showing the target phase (B_s for milling)
    depth: int            # grid steps to the nearest differing cell or grid edge, minus one

    def to_dict(self, names) -> dict:
        return {"index": list(self.cell.index),
                "values": dict(zip(names, self.cell.values)),
                "fraction": self.fraction, "depth": self.depth,
                "modal": str(self.cell.modal) if self.cell.modal else None}


def interior_depth(diagram: PhaseDiagram, target: Phase) -> dict[tuple, int]:
    """Chebyshev depth of every cell inside the region whose modal phase is ``target``.

    Cells beyond the grid edge count as outside the region, since nothing
    is known about them.
    """
    shape = diagram.shape
    outside = [c.index for c in diagram.cells if c.modal != target]
    depth = {}
    for c in diagram.cells:
        to_edge = min(min(i + 1, n - i) for i, n in zip(c.index, shape))
        d = to_edge
        for o in outside:
            d = min(d, max(abs(a - b) for a, b in zip(c.index, o)))
        depth[c.index] = d - 1
    return depth


def recommend(diagram: PhaseDiagram, target: Phase = Phase.STABLE_MILLING) -> Recommendation:
    """Cell most likely to show ``target``; ties go to the deepest interior cell.

    Raises :class:`CapabilityAbort` when no trial anywhere shows ``target``.
    """
    target = Phase(target)
    if not any(c.count(target) for c in diagram.cells):
        totals = {p: sum(c.count(p) for c in diagram.cells) for p in PHASES if p != target}
        best = max(totals.items(), key=lambda kv: kv[1])
        raise CapabilityAbort(target, best[0] if best[1] > 0 else None)
    depth = interior_depth(diagram, target)
    best = min(diagram.cells,
               key=lambda c: (-c.fraction(target), -depth[c.index], c.index))
    return Recommendation(best, best.fraction(target), depth[best.index])


# --------------------------------------------------------------------------
# CSV round trip

ABBREV = {Phase.STABLE_MILLING: "S", Phase.SEMI_STABLE_MILLING: "s",
          Phase.COLLIDING_UNSTABLE: "C", Phase.DISPERSION: "D", None: "x"}
UNABBREV = {v: k for k, v in ABBREV.items()}


def diagram_csv(diagram: PhaseDiagram) -> str:
    buf = io.StringIO()
    buf.write(f"# rsrs phase diagram; seeds_per_cell={diagram.seeds_per_cell}; "
              f"root_seed={diagram.root_seed}; labels: "
              + " ".join(f"{v}={k if k else 'error'}" for k, v in ABBREV.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    names = list(diagram.axis_names)
    w.writerow(["cell", *names, *[p.value for p in PHASES], "errors", "b_s", "modal", "labels"])
    for flat, c in enumerate(diagram.cells):
        w.writerow([flat, *[repr(x) for x in c.values], *[c.count(p) for p in PHASES],
                    c.n_errors, repr(c.b_s), c.modal.value if c.modal else "",
                    "".join(ABBREV[lab] for lab in c.labels)])
    return buf.getvalue()


def write_diagram_csv(diagram: PhaseDiagram, path) -> None:
    Path(path).write_text(diagram_csv(diagram))


def read_diagram_csv(path) -> PhaseDiagram:
    text = Path(path).read_text()
    lines = text.splitlines()
    header = lines[0]
    if not header.startswith("# rsrs phase diagram"):
        raise ValueError(f"{path}: not a phase diagram file")
    meta = dict(part.strip().split("=", 1) for part in header.split(";")[1:3])
    seeds = int(meta["seeds_per_cell"])
    root = int(meta["root_seed"])
    rows = list(csv.DictReader(lines[1:]))
    cols = list(csv.reader(lines[1:2]))[0]
    names = cols[1:cols.index(PHASES[0].value)]
    converters = [SWEEPABLE.get(n, float) for n in names]
    cells_raw = []
    for row in rows:
        values = tuple(conv(row[n]) for conv, n in zip(converters, names))
        labels = tuple(UNABBREV[ch] for ch in row["labels"])
        if len(labels) != seeds:
            raise ValueError(f"{path}: cell {row['cell']} has {len(labels)} labels, "
                             f"expected {seeds}")
        cells_raw.append((values, labels))
    axes = []
    for k, n in enumerate(names):
        seen = []
        for values, _ in cells_raw:
            if values[k] not in seen:
                seen.append(values[k])
        axes.append((n, tuple(seen)))
    cells = []
    for values, labels in cells_raw:
        idx = tuple(axes[k][1].index(values[k]) for k in range(len(names)))
        errors = tuple(f"replicate {r}: failed" for r, lab in enumerate(labels) if lab is None)
        cells.append(CellResult(idx, values, labels, errors))
    return PhaseDiagram(tuple(axes), seeds, root, tuple(cells))


def write_trial_records(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")


def read_overlay(path) -> list[dict]:
    """Real-experiment outcomes: CSV with the diagram's axis columns plus ``phase``."""
    out = []
    with open(path, newline="") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            row = {k.strip(): (v or "").strip() for k, v in row.items()}
            try:
                phase = Phase(row.pop("phase"))
                out.append({"phase": phase,
                            **{ALIASES.get(k, k): float(v) for k, v in row.items() if v}})
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: bad overlay row ({exc})") from None
    return out


def export_diagram(diagram: PhaseDiagram, fmt: str, path, overlay=()) -> Path:
    """Write ``diagram`` as ``csv`` or ``svg`` (the latter with optional overlay markers)."""
    from .render import diagram_svg

    path = Path(path)
    if fmt == "csv":
        path.write_text(diagram_csv(diagram))
    elif fmt == "svg":
        path.write_text(diagram_svg(diagram, overlay))
    else:
        raise ValueError(f"unknown diagram format {fmt!r}; use csv or svg")
    return path


def diagram_summary(diagram: PhaseDiagram) -> str:
    return json.dumps({
        "axes": {n: list(v) for n, v in diagram.axes},
        "seeds_per_cell": diagram.seeds_per_cell,
        "modal_phases": sorted(str(p) for p in diagram.modal_phases()),
    })
