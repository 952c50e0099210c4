"""Static SVG output: phase-diagram heat maps and trajectory frame strips.

Plain string building keeps the output byte-stable across runs and
library versions, which the determinism checks rely on.
"""

from __future__ import annotations

import itertools
import math
from xml.sax.saxutils import escape

import numpy as np

from .metrics import PHASES, Phase

COLORS = {
    Phase.STABLE_MILLING: "#2e7d32",
    Phase.SEMI_STABLE_MILLING: "#f9a825",
    Phase.COLLIDING_UNSTABLE: "#c62828",
    Phase.DISPERSION: "#1565c0",
    None: "#9e9e9e",
}
CELL = 56
MARGIN = 70
AXIS_LABELS = {"v": "v (m/s)", "omega": "omega (rad/s)", "n_agents": "N",
               "inflation_factor": "inflation", "dt": "dt (s)"}


def _f(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _marker(phase: Phase, cx: float, cy: float, r: float = 9) -> str:
    style = 'fill="white" stroke="black" stroke-width="2"'
    if phase == Phase.STABLE_MILLING:
        return f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(r)}" {style}/>'
    if phase == Phase.SEMI_STABLE_MILLING:
        pts = [(cx, cy - r), (cx + r, cy + r * 0.8), (cx - r, cy + r * 0.8)]
        return f'<polygon points="{" ".join(f"{_f(a)},{_f(b)}" for a, b in pts)}" {style}/>'
    if phase == Phase.COLLIDING_UNSTABLE:
        return (f'<rect x="{_f(cx - r)}" y="{_f(cy - r)}" width="{_f(2 * r)}" '
                f'height="{_f(2 * r)}" {style}/>')
    return (f'<path d="M{_f(cx - r)},{_f(cy - r)}L{_f(cx + r)},{_f(cy + r)}'
            f'M{_f(cx - r)},{_f(cy + r)}L{_f(cx + r)},{_f(cy - r)}" '
            f'stroke="black" stroke-width="3"/>')


def _nearest(values, x) -> int:
    return min(range(len(values)), key=lambda k: (abs(values[k] - x), k))


def _panel(cells, x_axis, y_axis, ox, oy, title, overlay) -> list[str]:
    (xn, xv), (yn, yv) = x_axis, y_axis
    out = []
    if title:
        out.append(f'<text x="{ox}" y="{oy - 30}" font-size="13">{escape(title)}</text>')
    H = len(yv) * CELL
    for c in cells:
        i, j = c["ix"], c["iy"]
        cell = c["cell"]
        modal = cell.modal
        share = cell.fraction(modal) if modal is not None else 1.0
        x, y = ox + i * CELL, oy + H - (j + 1) * CELL
        out.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                   f'fill="{COLORS[modal]}" fill-opacity="{_f(0.15 + 0.85 * share)}" '
                   f'stroke="white"/>')
        out.append(f'<text x="{x + CELL / 2:.1f}" y="{y + CELL - 6}" font-size="10" '
                   f'text-anchor="middle">{cell.b_s:.2f}</text>')
    for i, x in enumerate(xv):
        out.append(f'<text x="{ox + (i + 0.5) * CELL:.1f}" y="{oy + H + 16}" font-size="11" '
                   f'text-anchor="middle">{x:g}</text>')
    for j, y in enumerate(yv):
        out.append(f'<text x="{ox - 6}" y="{oy + H - (j + 0.5) * CELL + 4:.1f}" '
                   f'font-size="11" text-anchor="end">{y:g}</text>')
    out.append(f'<text x="{ox + len(xv) * CELL / 2:.1f}" y="{oy + H + 36}" font-size="12" '
               f'text-anchor="middle">{escape(AXIS_LABELS.get(xn, xn))}</text>')
    out.append(f'<text x="{ox - 48}" y="{oy + H / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 {ox - 48} {oy + H / 2:.1f})">'
               f'{escape(AXIS_LABELS.get(yn, yn))}</text>')
    for rec in overlay:
        if xn not in rec or (yn is not None and yn not in rec):
            continue
        i = _nearest(xv, rec[xn])
        j = _nearest(yv, rec[yn]) if yn is not None else 0
        out.append(_marker(rec["phase"], ox + (i + 0.5) * CELL, oy + H - (j + 0.5) * CELL - 6))
    return out


def diagram_svg(diagram, overlay=()) -> str:
    """Heat map over the first two axes, one panel per combination of any others.

    Fill color is the modal phase, opacity its share of seeds; each cell
    prints its B_s. Overlay records (``{axis: value, "phase": Phase}``)
    are drawn as markers snapped to the nearest cell.
    """
    axes = list(diagram.axes)
    x_axis = axes[0]
    y_axis = axes[1] if len(axes) > 1 else (None, (0.0,))
    rest = axes[2:]
    overlay = list(overlay)
    panels = []
    for combo in itertools.product(*(range(len(v)) for _, v in rest)):
        cells = [{"cell": c, "ix": c.index[0], "iy": c.index[1] if len(axes) > 1 else 0}
                 for c in diagram.cells if tuple(c.index[2:]) == combo]
        title = ", ".join(f"{n}={v[k]:g}" for (n, v), k in zip(rest, combo))
        panels.append((cells, title))

    pw = len(x_axis[1]) * CELL + MARGIN + 20
    ph = len(y_axis[1]) * CELL + MARGIN + 40
    legend_h = 24
    width = pw * len(panels) + MARGIN
    height = ph + legend_h + 20
    body = []
    for k, (cells, title) in enumerate(panels):
        body += _panel(cells, x_axis, y_axis, MARGIN + k * pw, 40, title, overlay)
    lx = MARGIN
    for p in PHASES:
        body.append(f'<rect x="{lx}" y="{height - legend_h}" width="12" height="12" '
                    f'fill="{COLORS[p]}"/>')
        body.append(f'<text x="{lx + 16}" y="{height - legend_h + 11}" font-size="11">'
                    f'{p.value}</text>')
        lx += 150
    return _svg(width, height, body)


def _svg(width, height, body) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n'
            + "\n".join(body) + "\n</svg>\n")


def trajectory_strip(states: np.ndarray, arena, collision_radius: float,
                     frames: int = 6, size: int = 180, trail: int = 40) -> str:
    """Row of ``frames`` snapshots of a ``(T+1, N, 3)`` state history."""
    T = states.shape[0] - 1
    picks = sorted({round(k * T / max(frames - 1, 1)) for k in range(frames)})
    s = size / max(arena.width, arena.height)
    body = []

    def px(x, y, ox):
        return ox + (x + arena.width / 2) * s, (arena.height / 2 - y) * s + 20

    for k, t in enumerate(picks):
        ox = k * (size + 10) + 5
        body.append(f'<rect x="{ox}" y="20" width="{_f(arena.width * s)}" '
                    f'height="{_f(arena.height * s)}" fill="none" stroke="#444"/>')
        body.append(f'<text x="{ox}" y="14" font-size="11">tick {t}</text>')
        for i in range(states.shape[1]):
            seg = states[max(0, t - trail):t + 1, i]
            if len(seg) > 1:
                pts = " ".join("{:.1f},{:.1f}".format(*px(x, y, ox)) for x, y, _ in seg)
                body.append(f'<polyline points="{pts}" fill="none" stroke="#90a4ae"/>')
            x, y, h = states[t, i]
            cx, cy = px(x, y, ox)
            r = max(collision_radius * s, 1.5)
            hx, hy = cx + 2 * r * math.cos(h), cy - 2 * r * math.sin(h)
            body.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{r:.1f}" fill="#37474f"/>')
            body.append(f'<line x1="{cx:.1f}" y1="{cy:.1f}" x2="{hx:.1f}" y2="{hy:.1f}" '
                        f'stroke="#d84315"/>')
    return _svg(len(picks) * (size + 10) + 10, size + 30, body)
