"""Hand-built SVG figures: scene overlays, line charts and a one-row heatmap.

Every figure takes a ``header`` dict that is embedded verbatim (as JSON) in a
``<metadata>`` element so the plot carries the config and seed that made it.
"""

from __future__ import annotations

import json
from xml.sax.saxutils import escape

import numpy as np

from .scene import Scene, box_corners
from .trajectory import Trajectory

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _doc(width: int, height: int, body: list[str], header: dict | None) -> str:
    meta = escape(json.dumps(header or {}, sort_keys=True))
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<metadata>{meta}</metadata>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        *body,
        "</svg>",
        "",
    ])


def _pts(xy) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in xy)


def scene_svg(scene: Scene, trajectories: dict[str, Trajectory], header: dict | None = None,
              size: int = 600, snapshots: int = 8) -> str:
    """Top-down overlay: restricted zones, obstacle boxes over time and ego boxes along each plan."""
    xmin, ymin, xmax, ymax = scene.bounds
    s = size / max(xmax - xmin, ymax - ymin)
    w, h = int((xmax - xmin) * s), int((ymax - ymin) * s)

    def to_px(xy):
        xy = np.asarray(xy, dtype=float)
        return np.column_stack([(xy[:, 0] - xmin) * s, h - (xy[:, 1] - ymin) * s])

    body = []
    for poly in scene.static_map.polygons:
        body.append(f'<polygon points="{_pts(to_px(poly))}" fill="#999999" stroke="none"/>')
    t_end = max([tr.t[-1] for tr in trajectories.values()] + [1e-9])
    times = np.linspace(0.0, t_end, snapshots)
    for obs in scene.obstacles:
        for k, t in enumerate(times):
            c = obs.corners_at(np.array([t]))[0]
            op = 0.15 + 0.6 * k / max(snapshots - 1, 1)
            body.append(f'<polygon points="{_pts(to_px(c))}" fill="#d62728" fill-opacity="{op:.2f}" stroke="none"/>')
    for i, (name, tr) in enumerate(trajectories.items()):
        color = _PALETTE[i % len(_PALETTE)]
        poses = tr.pose_at(np.linspace(0.0, tr.t[-1], snapshots))
        corners = box_corners(poses[:, 0], poses[:, 1], poses[:, 2], scene.robot.length,
                              scene.robot.width, scene.robot.rear_offset)
        for k, c in enumerate(corners):
            op = 0.15 + 0.6 * k / max(snapshots - 1, 1)
            body.append(f'<polygon points="{_pts(to_px(c))}" fill="{color}" fill-opacity="{op:.2f}" stroke="none"/>')
        body.append(f'<polyline points="{_pts(to_px(tr.xy))}" fill="none" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="8" y="{18 + 16 * i}" font-size="13" fill="{color}">{escape(name)}</text>')
    return _doc(w, h, body, header)


def line_chart(series: dict[str, tuple[np.ndarray, np.ndarray]], header: dict | None = None,
               xlabel: str = "", ylabel: str = "", width: int = 640, height: int = 360) -> str:
    """Simple multi-series line chart with min/max axis labels."""
    pad = 48
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()] or [np.zeros(1)])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()] or [np.zeros(1)])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def to_px(x, y):
        px = pad + (np.asarray(x) - x0) / (x1 - x0) * (width - 2 * pad)
        py = height - pad - (np.asarray(y) - y0) / (y1 - y0) * (height - 2 * pad)
        return np.column_stack([px, py])

    body = [
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 16}" font-size="11">{x0:.3g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" font-size="11" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" font-size="11" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" font-size="11" text-anchor="end">{y1:.3g}</text>',
        f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="12" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 12 {height / 2:.0f})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
    ]
    for i, (name, (x, y)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        body.append(f'<polyline points="{_pts(to_px(x, y))}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(f'<text x="{width - pad}" y="{pad + 14 * i}" font-size="11" fill="{color}" '
                    f'text-anchor="end">{escape(name)}</text>')
    return _doc(width, height, body, header)


def heatmap_row(labels: list[str], rows: dict[str, list[float]], header: dict | None = None,
                cell: int = 90) -> str:
    """One heatmap row per metric; each row is colour-normalized to its own range."""
    pad_left, pad_top = 150, 30
    width = pad_left + cell * len(labels) + 10
    height = pad_top + 40 * len(rows) + 10
    body = []
    for j, lab in enumerate(labels):
        body.append(f'<text x="{pad_left + cell * j + cell / 2:.0f}" y="20" font-size="12" '
                    f'text-anchor="middle">{escape(lab)}</text>')
    for i, (name, vals) in enumerate(rows.items()):
        y = pad_top + 40 * i
        body.append(f'<text x="8" y="{y + 24}" font-size="12">{escape(name)}</text>')
        v = np.asarray(vals, dtype=float)
        finite = v[np.isfinite(v)]
        lo, hi = (float(finite.min()), float(finite.max())) if len(finite) else (0.0, 1.0)
        for j, val in enumerate(v):
            frac = 0.0 if not np.isfinite(val) or hi <= lo else (val - lo) / (hi - lo)
            shade = int(round(255 - 200 * frac))
            body.append(f'<rect x="{pad_left + cell * j}" y="{y}" width="{cell - 2}" height="36" '
                        f'fill="rgb(255,{shade},{shade})"/>')
            body.append(f'<text x="{pad_left + cell * j + cell / 2:.0f}" y="{y + 23}" font-size="11" '
                        f'text-anchor="middle">{val:.3g}</text>')
    return _doc(width, height, body, header)
