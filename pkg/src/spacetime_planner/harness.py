"""Kinematic bicycle follower and driving-dynamics metrics.

The follower tracks a time-stamped plan with pure-pursuit steering toward a
point a few states ahead and a proportional speed loop. Its acceleration
limits shrink with the control stiffness: braking scales linearly, throttle
follows a much steeper table, so a soft agent recovers lost time slowly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from .scene import Scene, wrap_to_pi
from .trajectory import Trajectory

G = 9.81
# (stiffness, brake multiplier, throttle multiplier)
STIFFNESS_TABLE = np.array([
    [0.1, 0.1, 0.05],
    [0.2, 0.2, 0.08],
    [0.5, 0.5, 0.12],
    [0.7, 0.7, 0.22],
    [1.0, 1.0, 1.0],
])
DEFAULT_BINS = (0.0, 3.5, 5.0)


def stiffness_multipliers(stiffness: float) -> tuple[float, float]:
    """(brake, throttle) multipliers, linear between the tabulated rows."""
    s, brake, throttle = STIFFNESS_TABLE.T
    return float(np.interp(stiffness, s, brake)), float(np.interp(stiffness, s, throttle))


@dataclass
class FollowerConfig:
    wheelbase: float = 2.7
    lookahead: int = 3
    stiffness: float = 1.0
    dt_sim: float = 0.01
    max_accel: float = G
    max_steer: float = 0.6
    speed_gain: float = 4.0  # 1/s, speed error -> acceleration
    timing_gain: float = 4.0  # 1/s^2, along-track lag -> acceleration

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise ValueError("wheelbase must be positive")
        if not 0 < self.stiffness <= 1:
            raise ValueError("stiffness must lie in (0, 1]")
        if self.lookahead < 1:
            raise ValueError("lookahead must be at least one state")
        if self.dt_sim <= 0:
            raise ValueError("dt_sim must be positive")

    @property
    def accel_limits(self) -> tuple[float, float]:
        """(max deceleration, max acceleration), both positive."""
        brake, throttle = stiffness_multipliers(self.stiffness)
        return brake * self.max_accel, throttle * self.max_accel


@dataclass
class DriveLog:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    a_long: np.ndarray
    a_lat: np.ndarray
    error: np.ndarray
    collisions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def collided(self) -> bool:
        return bool(np.any(self.collisions))

    def columns(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in ("t", "x", "y", "theta", "v", "a_long", "a_lat", "error")}

    def to_csv(self, path, comments: list[str] = ()) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            for c in comments:
                fh.write(f"# {c}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in zip(*cols.values()):
                w.writerow([repr(float(v)) for v in row])


def _planned_speeds(traj: Trajectory) -> np.ndarray:
    seg = np.linalg.norm(np.diff(traj.xy, axis=0), axis=1)
    return seg / np.diff(traj.t)


def follow(traj: Trajectory, follower: FollowerConfig | None = None, scene: Scene | None = None) -> DriveLog:
    """Drive ``traj`` with the kinematic bicycle; collisions are logged, not raised."""
    cfg = follower or FollowerConfig()
    if traj.N < 1 or np.any(np.diff(traj.t) <= 0):
        raise ValueError("trajectory times must be strictly increasing")
    speeds = _planned_speeds(traj)
    decel, accel = cfg.accel_limits
    L = cfg.wheelbase
    n_steps = int(math.floor(traj.t[-1] / cfg.dt_sim + 1e-9))
    t = np.arange(n_steps + 1) * cfg.dt_sim
    mids = 0.5 * (traj.t[:-1] + traj.t[1:])
    seg_acc = np.gradient(speeds, mids) if traj.N > 1 else np.zeros(1)

    out = np.zeros((n_steps + 1, 6))  # x, y, theta, v, a_long, a_lat
    x, y, th = traj.states[0, :3]
    v = speeds[0]
    idx = 0
    pts = traj.xy
    for k in range(n_steps + 1):
        # progress index: nearest planned state within a short forward window
        hi = min(idx + 2 * cfg.lookahead + 2, traj.N + 1)
        d2 = np.sum((pts[idx:hi] - (x, y)) ** 2, axis=1)
        idx += int(np.argmin(d2))
        target = pts[min(idx + cfg.lookahead, traj.N)]
        dx, dy = target[0] - x, target[1] - y
        ld = math.hypot(dx, dy)
        if ld > 1e-9:
            alpha = wrap_to_pi(math.atan2(dy, dx) - th)
            steer = math.atan2(2.0 * L * math.sin(alpha), ld)
        else:
            steer = 0.0
        steer = min(max(steer, -cfg.max_steer), cfg.max_steer)

        # speed loop: planned speed and acceleration at this time, plus along-track lag
        seg = min(int(np.searchsorted(traj.t, t[k], side="right")) - 1, traj.N - 1)
        ref = traj.pose_at(t[k])
        lag = (ref[0] - x) * math.cos(th) + (ref[1] - y) * math.sin(th)
        a = seg_acc[seg] + cfg.speed_gain * (speeds[seg] - v) + cfg.timing_gain * lag
        a = min(max(a, -decel), accel)
        a_lat = v * v * math.tan(steer) / L
        out[k] = (x, y, th, v, a, a_lat)

        x += v * math.cos(th) * cfg.dt_sim
        y += v * math.sin(th) * cfg.dt_sim
        th += v / L * math.tan(steer) * cfg.dt_sim
        v = max(v + a * cfg.dt_sim, 0.0)

    plan = np.array([traj.pose_at(tk)[:2] for tk in t])
    error = np.linalg.norm(out[:, :2] - plan, axis=1)
    if scene is not None:
        collisions = scene.collisions(np.column_stack([out[:, :3], t]))
    else:
        collisions = np.zeros(len(t), dtype=bool)
    return DriveLog(t, *out.T, error=error, collisions=collisions)


@dataclass
class DynamicsMetrics:
    max_a_long: float
    min_a_long: float
    max_abs_a_lat: float
    iqr_a_long: float
    iqr_a_lat: float
    max_error: float
    bin_edges: tuple[float, ...]
    bin_fractions: tuple[float, ...]
    collided: bool = False

    def as_dict(self) -> dict:
        d = asdict(self)
        d["bin_edges"] = list(self.bin_edges)
        d["bin_fractions"] = list(self.bin_fractions)
        return d

    def to_json(self, path, header: dict | None = None) -> None:
        doc = {"header": header or {}, "metrics": self.as_dict()}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def longitudinal_acceleration(t: np.ndarray, v: np.ndarray, window: float = 0.2) -> np.ndarray:
    """Central difference of the speed after a moving-average window of ``window`` seconds."""
    if len(v) < 2:
        return np.zeros(len(v))
    dt = float(t[1] - t[0])
    size = max(int(round(window / dt)), 1)
    smooth = uniform_filter1d(np.asarray(v, dtype=float), size, mode="nearest")
    return np.gradient(smooth, dt)


def bin_fractions(values: np.ndarray, edges=DEFAULT_BINS) -> tuple[float, ...]:
    """Fraction of samples of ``|values|`` in ``[e_k, e_k+1)``; the last bin is open."""
    a = np.abs(np.asarray(values, dtype=float))
    if len(a) == 0:
        raise ValueError("no samples")
    bounds = list(edges[1:]) + [math.inf]
    counts = [np.count_nonzero((a >= lo) & (a < hi)) for lo, hi in zip(edges, bounds)]
    # values below the first edge (only possible with edges[0] > 0) join the first bin
    counts[0] += np.count_nonzero(a < edges[0])
    return tuple(c / len(a) for c in counts)


def dynamics_metrics(log: DriveLog, traj: Trajectory | None = None, edges=DEFAULT_BINS,
                     window: float = 0.2) -> DynamicsMetrics:
    if len(log.t) == 0:
        raise ValueError("empty drive log")
    a_long = longitudinal_acceleration(log.t, log.v, window)
    error = log.error
    if traj is not None:
        plan = np.array([traj.pose_at(tk)[:2] for tk in np.minimum(log.t, traj.t[-1])])
        error = np.linalg.norm(np.column_stack([log.x, log.y]) - plan, axis=1)

    def iqr(a):
        q1, q3 = np.percentile(a, [25, 75])
        return float(q3 - q1)

    return DynamicsMetrics(
        max_a_long=float(a_long.max()),
        min_a_long=float(a_long.min()),
        max_abs_a_lat=float(np.abs(log.a_lat).max()),
        iqr_a_long=iqr(a_long),
        iqr_a_lat=iqr(log.a_lat),
        max_error=float(error.max()),
        bin_edges=tuple(float(e) for e in edges),
        bin_fractions=bin_fractions(a_long, edges),
        collided=log.collided,
    )


def deceleration_proxy(traj: Trajectory, window: float = 0.2) -> float:
    """Hardest braking implied by the plan: the largest drop rate of segment speed
    from each segment to the first one at least ``window`` seconds later (m/s^2, >= 0)."""
    if traj.N < 2:
        return 0.0
    speeds = _planned_speeds(traj)
    mids = 0.5 * (traj.t[:-1] + traj.t[1:])
    worst = 0.0
    for i in range(len(speeds)):
        j = np.searchsorted(mids, mids[i] + window)
        if j >= len(speeds):
            break
        rate = (speeds[i] - speeds[j]) / (mids[j] - mids[i])
        worst = max(worst, float(rate))
    return worst
