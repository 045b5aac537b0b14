"""World model: static convex obstacles, moving boxes, and the exact collision test.

All collision queries are vectorized over states; a state row is
``(x, y, theta, t)`` with the robot footprint centred ``rear_offset`` metres
ahead of ``(x, y)`` along the heading.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np


def wrap_to_pi(a):
    """Wrap angles to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def box_corners(x, y, theta, length, width, offset=0.0) -> np.ndarray:
    """Corners of oriented boxes, shape ``(n, 4, 2)``, counter-clockwise."""
    x, y, theta = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, y, theta))
    c, s = np.cos(theta), np.sin(theta)
    cx, cy = x + offset * c, y + offset * s
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    lx, ly = local[:, 0], local[:, 1]
    px = cx[:, None] + c[:, None] * lx - s[:, None] * ly
    py = cy[:, None] + s[:, None] * lx + c[:, None] * ly
    return np.stack([px, py], axis=-1)


def _edge_normals(poly: np.ndarray) -> np.ndarray:
    edges = np.roll(poly, -1, axis=-2) - poly
    return np.stack([-edges[..., 1], edges[..., 0]], axis=-1)


def boxes_hit_polygon(corners: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Separating-axis test of ``n`` boxes ``(n, 4, 2)`` against one convex polygon."""
    separated = np.zeros(len(corners), dtype=bool)
    # polygon axes, shared by every box
    axes = _edge_normals(poly)
    pb = corners @ axes.T  # (n, 4, k)
    pp = poly @ axes.T  # (v, k)
    gap = (pb.max(axis=1) < pp.min(axis=0)) | (pp.max(axis=0) < pb.min(axis=1))
    separated |= gap.any(axis=1)
    # box axes: two per box suffice for a rectangle
    baxes = _edge_normals(corners)[:, :2, :]  # (n, 2, 2)
    pb = np.einsum("nvd,nkd->nvk", corners, baxes)
    pp = np.einsum("vd,nkd->nvk", poly, baxes)
    gap = (pb.max(axis=1) < pp.min(axis=1)) | (pp.max(axis=1) < pb.min(axis=1))
    separated |= gap.any(axis=1)
    return ~separated


def boxes_hit_boxes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise separating-axis test of rectangles ``a[i]`` against ``b[i]``."""
    axes = np.concatenate([_edge_normals(a)[:, :2], _edge_normals(b)[:, :2]], axis=1)
    pa = np.einsum("nvd,nkd->nvk", a, axes)
    pb = np.einsum("nvd,nkd->nvk", b, axes)
    gap = (pa.max(axis=1) < pb.min(axis=1)) | (pb.max(axis=1) < pa.min(axis=1))
    return ~gap.any(axis=1)


def points_in_convex(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Boolean mask of points inside (or on) a counter-clockwise convex polygon."""
    edges = np.roll(poly, -1, axis=0) - poly
    rel = points[:, None, :] - poly[None, :, :]
    return (_cross2(edges[None], rel) >= 0).all(axis=1)


def _as_convex_ccw(vertices) -> np.ndarray:
    poly = np.asarray(vertices, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise ValueError("polygon needs at least 3 (x, y) vertices")
    area2 = _cross2(poly, np.roll(poly, -1, axis=0)).sum()
    if abs(area2) < 1e-12:
        raise ValueError("polygon vertices are collinear")
    if area2 < 0:
        poly = poly[::-1].copy()
    edges = np.roll(poly, -1, axis=0) - poly
    turns = _cross2(edges, np.roll(edges, -1, axis=0))
    if np.any(turns < -1e-9):
        raise ValueError("polygon is not convex")
    return poly


@dataclass(frozen=True)
class RobotFootprint:
    length: float = 4.5
    width: float = 1.9
    rear_offset: float = 0.0

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("footprint dimensions must be positive")

    @property
    def circumscribed_radius(self) -> float:
        return math.hypot(0.5 * self.length + abs(self.rear_offset), 0.5 * self.width)

    def corners(self, states: np.ndarray, margin: float = 0.0) -> np.ndarray:
        states = np.atleast_2d(states)
        return box_corners(
            states[:, 0], states[:, 1], states[:, 2],
            self.length + 2 * margin, self.width + 2 * margin, self.rear_offset,
        )


@dataclass(frozen=True, eq=False)
class MovingObstacle:
    """Oriented box following piecewise-linear waypoints ``(x, y, theta, t)``."""

    waypoints: np.ndarray
    length: float = 4.5
    width: float = 1.9

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 4 or len(wp) < 2:
            raise ValueError("need at least two (x, y, theta, t) waypoints")
        if np.any(np.diff(wp[:, 3]) <= 0):
            raise ValueError("waypoint times must be strictly increasing")
        object.__setattr__(self, "waypoints", wp)
        # cumulative shortest-arc headings, so plain linear interp is shortest-arc
        dth = wrap_to_pi(np.diff(wp[:, 2]))
        unwrapped = wp[0, 2] + np.concatenate([[0.0], np.cumsum(dth)])
        object.__setattr__(self, "_theta", unwrapped)

    def pose_at(self, t) -> np.ndarray:
        """Pose ``(x, y, theta)`` at time(s) ``t``; clamps outside the waypoint span."""
        wp = self.waypoints
        tt = np.asarray(t, dtype=float)
        x = np.interp(tt, wp[:, 3], wp[:, 0])
        y = np.interp(tt, wp[:, 3], wp[:, 1])
        th = wrap_to_pi(np.interp(tt, wp[:, 3], self._theta))
        return np.stack([x, y, th], axis=-1)

    def corners_at(self, t) -> np.ndarray:
        p = np.atleast_2d(self.pose_at(np.atleast_1d(t)))
        return box_corners(p[:, 0], p[:, 1], p[:, 2], self.length, self.width)

    def frozen(self, t: float) -> MovingObstacle:
        p = self.pose_at(t)
        wp = np.array([[*p, 0.0], [*p, 1.0]])
        return MovingObstacle(wp, self.length, self.width)


def obstacle_pose_at(obstacle: MovingObstacle, t) -> np.ndarray:
    return obstacle.pose_at(t)


@dataclass(frozen=True, eq=False)
class StaticMap:
    bounds: tuple[float, float, float, float]
    polygons: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        xmin, ymin, xmax, ymax = (float(b) for b in self.bounds)
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("degenerate map bounds")
        object.__setattr__(self, "bounds", (xmin, ymin, xmax, ymax))
        object.__setattr__(self, "polygons", tuple(_as_convex_ccw(p) for p in self.polygons))

    def occupancy_grid(self, resolution: float) -> np.ndarray:
        """Boolean grid ``[row=y, col=x]``; a cell is occupied iff its centre is in a polygon."""
        xs, ys = self.cell_centers(resolution)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        occ = np.zeros(len(pts), dtype=bool)
        for poly in self.polygons:
            occ |= points_in_convex(pts, poly)
        return occ.reshape(gy.shape)

    def cell_centers(self, resolution: float) -> tuple[np.ndarray, np.ndarray]:
        xmin, ymin, xmax, ymax = self.bounds
        nx = max(1, int(round((xmax - xmin) / resolution)))
        ny = max(1, int(round((ymax - ymin) / resolution)))
        return xmin + (np.arange(nx) + 0.5) * resolution, ymin + (np.arange(ny) + 0.5) * resolution


@dataclass(frozen=True, eq=False)
class Scene:
    static_map: StaticMap
    obstacles: tuple[MovingObstacle, ...] = ()
    robot: RobotFootprint = field(default_factory=RobotFootprint)
    t_max: float = 10.0
    name: str = ""
    start: tuple[float, float, float] | None = None
    goal: tuple[float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")

    @property
    def bounds(self):
        return self.static_map.bounds

    def collisions(self, states, margin: float = 0.0, static_only: bool = False) -> np.ndarray:
        """Vectorized collision labels for ``(n, 4)`` states.

        ``margin`` inflates the robot box on every side; the exact test uses 0.
        """
        states = np.atleast_2d(np.asarray(states, dtype=float))
        corners = self.robot.corners(states, margin)
        xmin, ymin, xmax, ymax = self.static_map.bounds
        hit = (
            (corners[..., 0] < xmin) | (corners[..., 0] > xmax)
            | (corners[..., 1] < ymin) | (corners[..., 1] > ymax)
        ).any(axis=1)
        lo, hi = corners.min(axis=1), corners.max(axis=1)
        for poly in self.static_map.polygons:
            # bounding-box prefilter; SAT only runs where the boxes overlap
            plo, phi = poly.min(axis=0), poly.max(axis=0)
            todo = ~hit & (lo < phi).all(axis=1) & (hi > plo).all(axis=1)
            if todo.any():
                hit[todo] |= boxes_hit_polygon(corners[todo], poly)
        if static_only:
            return hit
        for obs in self.obstacles:
            todo = ~hit
            if todo.any():
                hit[todo] |= boxes_hit_boxes(corners[todo], obs.corners_at(states[todo, 3]))
        return hit

    def frozen(self, t: float) -> Scene:
        """Copy with every moving obstacle held at its pose at time ``t``."""
        return replace(self, obstacles=tuple(o.frozen(t) for o in self.obstacles))

    def without_obstacles(self) -> Scene:
        return replace(self, obstacles=())

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "bounds": list(self.static_map.bounds),
            "polygons": [p.tolist() for p in self.static_map.polygons],
            "obstacles": [
                {"length": o.length, "width": o.width, "waypoints": o.waypoints.tolist()}
                for o in self.obstacles
            ],
            "robot": {
                "length": self.robot.length,
                "width": self.robot.width,
                "rear_offset": self.robot.rear_offset,
            },
            "t_max": self.t_max,
        }
        if self.start is not None:
            d["start"] = list(self.start)
        if self.goal is not None:
            d["goal"] = list(self.goal)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Scene:
        smap = StaticMap(tuple(d["bounds"]), tuple(d.get("polygons", ())))
        obstacles = tuple(
            MovingObstacle(np.asarray(o["waypoints"], dtype=float),
                           float(o.get("length", 4.5)), float(o.get("width", 1.9)))
            for o in d.get("obstacles", ())
        )
        robot = RobotFootprint(**d.get("robot", {}))
        return cls(
            smap, obstacles, robot, float(d.get("t_max", 10.0)), d.get("name", ""),
            tuple(d["start"]) if "start" in d else None,
            tuple(d["goal"]) if "goal" in d else None,
        )

    @classmethod
    def load(cls, path: str | Path) -> Scene:
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path: str | Path) -> None:
        text = json.dumps(self.to_dict(), indent=2)
        # keep innermost numeric lists (vertices, poses) on one line
        text = re.sub(r"\[\s*([-0-9.eE+,\s]+?)\s*\]",
                      lambda m: "[" + ", ".join(v.strip() for v in m.group(1).split(",")) + "]", text)
        Path(path).write_text(text + "\n")


def in_collision(scene: Scene, state: Sequence[float], margin: float = 0.0) -> bool:
    return bool(scene.collisions(np.asarray(state, dtype=float)[None, :], margin)[0])


@dataclass(frozen=True)
class Region:
    """Axis-aligned spatio-temporal sampling box."""

    x: tuple[float, float]
    y: tuple[float, float]
    theta: tuple[float, float] = (-math.pi, math.pi)
    t: tuple[float, float] = (0.0, 1.0)

    @property
    def lows(self):
        return np.array([self.x[0], self.y[0], self.theta[0], self.t[0]])

    @property
    def highs(self):
        return np.array([self.x[1], self.y[1], self.theta[1], self.t[1]])


def sample_labeled_batch(scene: Scene, region: Region, count: int, rng_seed: int,
                         margin: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Uniform states in ``region`` with their ground-truth collision labels."""
    if count <= 0:
        raise ValueError("count must be positive")
    lo, hi = region.lows, region.highs
    if np.any(hi - lo <= 0):
        raise ValueError("degenerate sampling region")
    xmin, ymin, xmax, ymax = scene.bounds
    if lo[0] < xmin or lo[1] < ymin or hi[0] > xmax or hi[1] > ymax or lo[3] < 0 or hi[3] > scene.t_max:
        raise ValueError("region exceeds map bounds or time horizon")
    rng = np.random.default_rng(rng_seed)
    states = lo + (hi - lo) * rng.random((count, 4))
    return states, scene.collisions(states, margin)
