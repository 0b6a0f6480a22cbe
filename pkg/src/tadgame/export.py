"""File output: trajectory CSV, JSON metrics/comparison tables, zone CSV and SVG."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .simulation import COLUMNS, ComparisonRow, MetricsRecord, SimResult
from .zones import ZoneMap


def trajectory_csv(result: SimResult) -> str:
    # repr() of a float is the shortest string that parses back to the same double
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in result.trajectory:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def read_trajectory_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError("unexpected trajectory header")
    return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(COLUMNS))


def _clean(x):
    # JSON has no NaN/inf
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def metrics_dict(result: SimResult) -> dict:
    m = result.metrics
    return {
        "outcome": result.outcome.value,
        "event_time": _clean(float(result.event_time)),
        "steps": result.steps,
        "metrics": {k: _clean(v) for k, v in m.as_dict().items()} if m else None,
    }


def comparison_dict(rows: list[ComparisonRow]) -> list[dict]:
    out = []
    for r in rows:
        out.append({
            "controller": r.controller,
            "outcome": r.outcome,
            "metrics": {k: _clean(v) for k, v in r.metrics.as_dict().items()} if r.metrics else None,
            "error": r.error,
        })
    return out


def zone_csv(zmap: ZoneMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("x", "y", "label"))
    xs, ys = zmap.grid.centers()
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            w.writerow((repr(float(x)), repr(float(y)), zmap.labels[iy, ix].value))
    return buf.getvalue()


_COLORS = {"escape": "#9fd89f", "capture": "#f2a7a7", "boundary": "#cccccc"}


def zone_svg(zmap: ZoneMap, width: int = 480) -> str:
    """Cells as coloured rectangles with the boundary polylines on top (y up)."""
    g = zmap.grid
    spanx, spany = max(g.x_max - g.x_min, 1e-12), max(g.y_max - g.y_min, 1e-12)
    height = max(1, int(round(width * spany / spanx)))
    sx, sy = width / spanx, height / spany

    def px(x, y):
        return (x - g.x_min) * sx, (g.y_max - y) * sy

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">']
    xs, ys = g.centers()
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            x0, y0 = px(x - g.dx / 2, y + g.dy / 2)
            parts.append(f'<rect x="{x0:.3f}" y="{y0:.3f}" width="{g.dx * sx:.3f}" '
                         f'height="{g.dy * sy:.3f}" fill="{_COLORS[zmap.labels[iy, ix].value]}"/>')
    for line in zmap.boundary:
        pts = " ".join("{:.3f},{:.3f}".format(*px(x, y)) for x, y in line)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_run(result: SimResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trajectory": out / "trajectory.csv", "metrics": out / "metrics.json"}
    paths["trajectory"].write_text(trajectory_csv(result))
    paths["metrics"].write_text(json.dumps(metrics_dict(result), indent=2) + "\n")
    return paths


def write_zone_map(zmap: ZoneMap, out_dir: str | Path, stem: str = "zones") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{stem}.csv", "svg": out / f"{stem}.svg"}
    paths["csv"].write_text(zone_csv(zmap))
    paths["svg"].write_text(zone_svg(zmap))
    return paths


__all__ = ["trajectory_csv", "read_trajectory_csv", "metrics_dict", "comparison_dict",
           "zone_csv", "zone_svg", "write_run", "write_zone_map", "MetricsRecord"]
