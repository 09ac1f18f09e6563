"""Margin CSV export/import and deterministic SVG / tidy-CSV plot data."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .margin import MarginProfile
from .objects import ObjectParams, body_to_world

UNITS = {"mass": "N", "com": "m"}
MARGIN_COLUMNS = ("bound_A", "bound_B", "xi_plus", "xi_minus")


def _fmt(v: float) -> str:
    return repr(float(v))


def margin_csv(prof: MarginProfile) -> str:
    unit = UNITS[prof.kind]
    out = io.StringIO()
    out.write("k," + ",".join(f"{c}_{unit}" for c in MARGIN_COLUMNS) + "\n")
    bA, bB = prof.crossings("contact-A"), prof.crossings("contact-B")
    for k in range(len(prof.xi_plus)):
        row = (bA[k], bB[k], prof.xi_plus[k], prof.xi_minus[k])
        out.write(f"{k}," + ",".join(_fmt(v) for v in row) + "\n")
    return out.getvalue()


def read_margin_csv(path) -> tuple[dict, str]:
    return parse_margin_csv(Path(path).read_text(), str(path))


def parse_margin_csv(text: str, name: str = "<margin csv>") -> tuple[dict, str]:
    """Columns keyed by base name plus the unit parsed from the header."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError(f"{name}: empty margin file") from None
    if not header or header[0] != "k" or len(header) != 1 + len(MARGIN_COLUMNS):
        raise ValueError(f"{name}: not a margin CSV (header {header})")
    unit = header[1].rsplit("_", 1)[-1]
    cols = {c: [] for c in ("k",) + MARGIN_COLUMNS}
    for row in reader:
        if not row:
            continue
        cols["k"].append(int(row[0]))
        for c, v in zip(MARGIN_COLUMNS, row[1:]):
            cols[c].append(float(v))
    return {c: np.array(v) for c, v in cols.items()}, unit


def tidy_csv(cols: dict, unit: str, traj=None, obj: Optional[ObjectParams] = None, snapshots: int = 6) -> str:
    """Long-format rows ``series,k,x,y`` for margins and, given a trajectory, pose outlines."""
    out = io.StringIO()
    out.write("series,k,x,y\n")
    for c in ("xi_plus", "xi_minus"):
        for k, v in zip(cols["k"], cols[c]):
            out.write(f"{c}_{unit},{int(k)},{int(k)},{_fmt(v)}\n")
    if traj is not None and obj is not None:
        for k in snapshot_steps(traj.N, snapshots):
            for x, y in outline_world(obj, traj.theta[k]):
                out.write(f"outline,{k},{_fmt(x)},{_fmt(y)}\n")
    return out.getvalue()


def snapshot_steps(N: int, count: int) -> list[int]:
    if count <= 1:
        return [N]
    return sorted({int(round(i * N / (count - 1))) for i in range(count)})


def outline_world(obj: ObjectParams, theta: float) -> np.ndarray:
    """Object outline with the wall at x = 0 and the floor at y = 0."""
    pts = body_to_world(obj.profile.outline(), theta)
    pts[:, 0] += obj.profile.wall_height * math.sin(theta)
    return pts


def _polyline(points, stroke, width=1.5, closed=False):
    tag = "polygon" if closed else "polyline"
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    return f'<{tag} points="{coords}" fill="none" stroke="{stroke}" stroke-width="{width}"/>'


def margin_svg(cols: dict, unit: str, traj=None, obj: Optional[ObjectParams] = None, snapshots: int = 6) -> str:
    """Static SVG of the margin profile and, given a trajectory, pose snapshots."""
    W, H, pad = 640, 300, 40
    panels = 2 if traj is not None and obj is not None else 1
    total_h = H * panels
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{total_h}" '
             f'viewBox="0 0 {W} {total_h}">',
             f'<rect x="0" y="0" width="{W}" height="{total_h}" fill="white"/>']
    x0, x1, y0, y1 = pad, W - pad, H - pad, pad
    parts.append(_polyline([(x0, y1), (x0, y0), (x1, y0)], "black", 1.0))
    ks = np.asarray(cols.get("k", []), dtype=float)
    series = [(c, np.asarray(cols.get(c, []), dtype=float), color)
              for c, color in (("xi_plus", "#1f77b4"), ("xi_minus", "#d62728"))]
    finite = np.concatenate([v[np.isfinite(v)] for _, v, _ in series]) if len(ks) else np.zeros(0)
    if len(ks) == 0 or finite.size == 0:
        parts.append(f'<text x="{W / 2:.0f}" y="{H / 2:.0f}" text-anchor="middle" font-size="14">no data</text>')
    else:
        kmax = max(float(ks.max()), 1.0)
        vmax = float(finite.max()) or 1.0
        sx = lambda k: x0 + (x1 - x0) * k / kmax  # noqa: E731
        sy = lambda v: y0 - (y0 - y1) * v / vmax  # noqa: E731
        for name, v, color in series:
            pts = [(sx(k), sy(val)) for k, val in zip(ks, v) if np.isfinite(val)]
            parts.append(_polyline(pts, color))
            parts.append(f'<text x="{x1 - 90}" y="{y1 + (14 if name == "xi_plus" else 30)}" font-size="12" '
                         f'fill="{color}">{name} [{unit}]</text>')
        parts.append(f'<text x="{x0}" y="{y1 - 8}" font-size="11">max {vmax:.4g} {unit}</text>')
        parts.append(f'<text x="{x1}" y="{y0 + 16}" font-size="11" text-anchor="end">k = {kmax:.0f}</text>')
    if panels == 2:
        steps = snapshot_steps(traj.N, snapshots)
        outlines = [outline_world(obj, traj.theta[k]) for k in steps]
        allp = np.vstack(outlines)
        span = max(float(allp[:, 0].max()), float(allp[:, 1].max()), 1e-9)
        scale = (H - 2 * pad) / span
        ox, oy = pad + 20, 2 * H - pad
        tf = lambda p: (ox + scale * p[0], oy - scale * p[1])  # noqa: E731
        parts.append(_polyline([tf((0, span)), tf((0, 0)), tf((span * 1.6, 0))], "black", 2.0))
        for i, pts in enumerate(outlines):
            shade = int(200 - 160 * i / max(len(outlines) - 1, 1))
            parts.append(_polyline([tf(p) for p in pts], f"rgb({shade},{shade},{shade})", 1.2, closed=True))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
