"""Time-stamped SE(2) trajectories: seeding, re-timing, interpolation and path metrics."""

from __future__ import annotations

import heapq
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .scene import Scene, wrap_to_pi

MIN_CUSP_SEGMENT = 0.01  # metres; shorter displacements are ignored for cusp detection


class NoPathError(RuntimeError):
    """A* exhausted its frontier."""


@dataclass
class Trajectory:
    """``states`` is an ``(N+1, 4)`` array of ``(x, y, theta, t)`` rows."""

    states: np.ndarray

    def __post_init__(self):
        self.states = np.array(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != 4 or len(self.states) < 2:
            raise ValueError("trajectory needs at least two (x, y, theta, t) states")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory states must be finite")

    @property
    def N(self) -> int:
        return len(self.states) - 1

    @property
    def x(self):
        return self.states[:, 0]

    @property
    def y(self):
        return self.states[:, 1]

    @property
    def theta(self):
        return self.states[:, 2]

    @property
    def t(self):
        return self.states[:, 3]

    @property
    def xy(self):
        return self.states[:, :2]

    def copy(self) -> Trajectory:
        return Trajectory(self.states.copy())

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.xy, axis=0), axis=1).sum())

    def pose_at(self, t) -> np.ndarray:
        """Planned ``(x, y, theta)`` at time(s) ``t`` by linear interpolation in time."""
        tt = np.asarray(t, dtype=float)
        th = np.concatenate([[self.theta[0]], self.theta[0] + np.cumsum(wrap_to_pi(np.diff(self.theta)))])
        return np.stack(
            [np.interp(tt, self.t, self.x), np.interp(tt, self.t, self.y), np.interp(tt, self.t, th)],
            axis=-1,
        )

    # -- CSV ------------------------------------------------------------------
    def to_csv(self, path: str | Path | None = None, comments: list[str] | None = None) -> str:
        buf = io.StringIO()
        for line in comments or ():
            buf.write(f"# {line}\n")
        buf.write("x,y,theta,t\n")
        for row in self.states:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> Trajectory:
        lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines or [h.strip() for h in lines[0].split(",")] != ["x", "y", "theta", "t"]:
            raise ValueError("expected header x,y,theta,t")
        try:
            rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
        except ValueError as err:
            raise ValueError(f"malformed trajectory row: {err}") from None
        if any(len(r) != 4 for r in rows):
            raise ValueError("every row needs four columns")
        return cls(np.array(rows))


# -- seeding -------------------------------------------------------------------

_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def grid_costs(scene: Scene, resolution: float, inflation_penalty: float = 20.0) -> np.ndarray:
    """Per-cell traversal multiplier: ``inf`` for occupied, ``1 + penalty`` inside the
    robot's circumscribed radius of an obstacle or map edge, else 1."""
    occ = scene.static_map.occupancy_grid(resolution)
    padded = np.pad(~occ, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1] * resolution
    cost = np.ones(occ.shape)
    cost[dist < scene.robot.circumscribed_radius] = 1.0 + inflation_penalty
    cost[occ] = np.inf
    return cost


def astar(cost: np.ndarray, start: tuple[int, int], goal: tuple[int, int]) -> list[tuple[int, int]]:
    """8-connected A* on a ``[row, col]`` cost grid; step cost is length times the
    mean of the two cells' multipliers."""
    ny, nx = cost.shape
    if not np.isfinite(cost[start]) or not np.isfinite(cost[goal]):
        raise NoPathError("start or goal cell is occupied")

    def h(c):
        dy, dx = abs(c[0] - goal[0]), abs(c[1] - goal[1])
        return (dx + dy) + (math.sqrt(2) - 2) * min(dx, dy)

    g = {start: 0.0}
    parent = {start: None}
    frontier = [(h(start), 0, start)]
    counter = 0
    closed = set()
    while frontier:
        _, _, cur = heapq.heappop(frontier)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        closed.add(cur)
        for dr, dc in _MOVES:
            nb = (cur[0] + dr, cur[1] + dc)
            if not (0 <= nb[0] < ny and 0 <= nb[1] < nx) or nb in closed:
                continue
            c = cost[nb]
            if not np.isfinite(c):
                continue
            step = (math.sqrt(2) if dr and dc else 1.0) * 0.5 * (cost[cur] + c)
            ng = g[cur] + step
            if ng < g.get(nb, math.inf):
                g[nb] = ng
                parent[nb] = cur
                counter += 1
                heapq.heappush(frontier, (ng + h(nb), counter, nb))
    raise NoPathError("A* frontier exhausted")


def resample_polyline(points: np.ndarray, n_states: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-12])
    points = points[keep]
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))])
    q = np.linspace(0.0, s[-1], n_states)
    return np.stack([np.interp(q, s, points[:, 0]), np.interp(q, s, points[:, 1])], axis=1)


def headings_with_endpoints(xy: np.ndarray, theta0: float, theta_n: float) -> np.ndarray:
    """Unwrapped segment headings with the given endpoint headings spliced in."""
    d = np.diff(xy, axis=0)
    seg = np.arctan2(d[:, 1], d[:, 0])
    th = np.concatenate([[theta0], seg[1:], [theta_n]]) if len(xy) > 2 else np.array([theta0, theta_n])
    out = np.concatenate([[th[0]], th[0] + np.cumsum(wrap_to_pi(np.diff(th)))])
    return out


def times_from_arclength(xy: np.ndarray, v_e: float) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))]) / v_e


def straight_trajectory(start, goal, n_states: int, v_e: float) -> Trajectory:
    xy = np.linspace(np.asarray(start[:2], float), np.asarray(goal[:2], float), n_states)
    th = headings_with_endpoints(xy, start[2], goal[2])
    return Trajectory(np.column_stack([xy, th, times_from_arclength(xy, v_e)]))


def astar_seed(scene: Scene, start, goal, resolution: float = 0.5, v_e: float = 11.11,
               n_states: int = 101, inflation_penalty: float = 20.0) -> Trajectory:
    """Grid A* seed resampled to ``n_states`` evenly spaced states timed at ``v_e``."""
    start = tuple(float(v) for v in start)
    goal = tuple(float(v) for v in goal)
    if math.hypot(goal[0] - start[0], goal[1] - start[1]) < 1e-12:
        return Trajectory(np.array([[*start, 0.0], [*goal, 0.0]]))
    cost = grid_costs(scene, resolution, inflation_penalty)
    xmin, ymin, _, _ = scene.bounds
    ny, nx = cost.shape

    def cell(p):
        c = int(np.clip((p[0] - xmin) // resolution, 0, nx - 1))
        r = int(np.clip((p[1] - ymin) // resolution, 0, ny - 1))
        return r, c

    path = astar(cost, cell(start), cell(goal))
    centers = np.array([[xmin + (c + 0.5) * resolution, ymin + (r + 0.5) * resolution] for r, c in path])
    poly = np.vstack([start[:2], centers[1:-1], goal[:2]]) if len(centers) > 2 else np.array([start[:2], goal[:2]])
    xy = resample_polyline(poly, n_states)
    th = headings_with_endpoints(xy, start[2], goal[2])
    return Trajectory(np.column_stack([xy, th, times_from_arclength(xy, v_e)]))


# -- re-timing and interpolation -------------------------------------------------

def uniform_times(t_n: float, n: int) -> np.ndarray:
    return np.arange(n + 1) * (t_n / n)


def redistribute_times(traj: Trajectory) -> Trajectory:
    """Copy with ``t_i = i * t_N / N``; the endpoint keeps ``t_N`` exactly."""
    t_n = traj.t[-1]
    if t_n <= 0:
        raise ValueError("t_N must be positive")
    out = traj.copy()
    out.states[:, 3] = uniform_times(t_n, traj.N)
    out.states[-1, 3] = t_n
    return out


def interpolate_random(traj: Trajectory, i: int, u: float) -> np.ndarray:
    """Point at fraction ``u`` of segment ``i``; heading along the shortest arc."""
    if not 0 <= i < traj.N:
        raise IndexError("segment index out of range")
    a, b = traj.states[i], traj.states[i + 1]
    xy = (1 - u) * a[:2] + u * b[:2]
    th = a[2] + u * wrap_to_pi(b[2] - a[2])
    return np.array([xy[0], xy[1], th])


def supersample(traj: Trajectory, factor: int = 10) -> np.ndarray:
    """Dense ``(x, y, theta, t)`` rows with ``factor`` sub-steps per segment."""
    u = np.arange(factor) / factor
    a, b = traj.states[:-1], traj.states[1:]
    d = b - a
    d[:, 2] = wrap_to_pi(d[:, 2])
    dense = (a[:, None, :] + u[None, :, None] * d[:, None, :]).reshape(-1, 4)
    return np.vstack([dense, traj.states[-1:]])


# -- metrics --------------------------------------------------------------------

@dataclass
class PathMetrics:
    length: float
    cusps: int
    max_curvature: float
    normalized_curvature: float
    aol: float
    computation_time: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def menger_curvature(p0, p1, p2) -> np.ndarray:
    """Menger curvature of point triples (arrays of shape ``(n, 2)``); 0 for coincident points."""
    a = np.linalg.norm(p1 - p0, axis=-1)
    b = np.linalg.norm(p2 - p1, axis=-1)
    c = np.linalg.norm(p2 - p0, axis=-1)
    cross = (p1[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1]) - (p1[..., 1] - p0[..., 1]) * (p2[..., 0] - p0[..., 0])
    den = a * b * c
    ok = den > 1e-18
    return np.where(ok, 2.0 * np.abs(cross) / np.where(ok, den, 1.0), 0.0)


def count_cusps(xy: np.ndarray, min_segment: float = MIN_CUSP_SEGMENT) -> int:
    d = np.diff(xy, axis=0)
    d = d[np.linalg.norm(d, axis=1) >= min_segment]
    if len(d) < 2:
        return 0
    return int(np.sum((d[:-1] * d[1:]).sum(axis=1) < 0))


def path_metrics(traj: Trajectory, computation_time: float = 0.0) -> PathMetrics:
    xy = traj.xy
    seg = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    length = float(seg.sum())
    # drop duplicate consecutive points before forming curvature triples
    keep = np.concatenate([[True], seg > 1e-9])
    pts = xy[keep]
    if len(pts) >= 3:
        kappa = menger_curvature(pts[:-2], pts[1:-1], pts[2:])
        s = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        ds = 0.5 * (s[:-1] + s[1:])
        max_k, norm_k = float(kappa.max()), float((kappa * ds).sum())
    else:
        max_k = norm_k = 0.0
    turn = float(np.abs(wrap_to_pi(np.diff(traj.theta))).sum())
    return PathMetrics(
        length=length,
        cusps=count_cusps(xy),
        max_curvature=max_k,
        normalized_curvature=norm_k,
        aol=turn / length if length > 0 else 0.0,
        computation_time=computation_time,
    )


def clustering_index(traj: Trajectory) -> float:
    """Ratio of the largest to the smallest consecutive spatial spacing."""
    seg = np.linalg.norm(np.diff(traj.xy, axis=0), axis=1)
    return float(seg.max() / max(seg.min(), 1e-9))
