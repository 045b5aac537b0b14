import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spacetime_planner.harness import (
    G,
    DriveLog,
    DynamicsMetrics,
    FollowerConfig,
    bin_fractions,
    deceleration_proxy,
    dynamics_metrics,
    follow,
    longitudinal_acceleration,
    stiffness_multipliers,
)
from spacetime_planner.trajectory import Trajectory, straight_trajectory

from fixtures_harness import brake_and_hold


def test_stiffness_table_interpolation():
    assert stiffness_multipliers(1.0) == (1.0, 1.0)
    assert stiffness_multipliers(0.1) == pytest.approx((0.1, 0.05))
    brake, throttle = stiffness_multipliers(0.6)
    assert brake == pytest.approx(0.6)
    assert throttle == pytest.approx(0.5 * (0.12 + 0.22))
    lo, hi = FollowerConfig(stiffness=0.5).accel_limits
    assert lo == pytest.approx(0.5 * G) and hi == pytest.approx(0.12 * G)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_limits_never_grow_as_stiffness_drops(a, b):
    lo, hi = sorted((a, b))
    assert all(x <= y + 1e-12 for x, y in zip(stiffness_multipliers(lo), stiffness_multipliers(hi)))


@pytest.mark.parametrize("kwargs", [{"stiffness": 0.0}, {"stiffness": 1.2}, {"wheelbase": 0},
                                    {"lookahead": 0}, {"dt_sim": 0}])
def test_follower_config_validation(kwargs):
    with pytest.raises(ValueError):
        FollowerConfig(**kwargs)


def test_straight_line_is_tracked_exactly():
    traj = straight_trajectory((0, 0, 0), (50, 0, 0), 101, 11.11)
    log = follow(traj, FollowerConfig(stiffness=1.0))
    assert log.error.max() < 1e-6
    assert np.abs(log.a_long).max() < 1e-6
    assert log.t[-1] <= traj.t[-1] + 1e-12
    assert not log.collided


def test_follower_turns_onto_a_curved_path():
    ang = np.linspace(0, math.pi / 2, 101)
    xy = 15 * np.column_stack([np.sin(ang), 1 - np.cos(ang)])
    s = np.concatenate([[0], np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))])
    traj = Trajectory(np.column_stack([xy, ang, s / 8.0]))
    log = follow(traj)
    assert log.error.max() < 0.5
    # steady cornering: lateral acceleration near v^2 / r
    mid = len(log.t) // 2
    assert log.a_lat[mid] == pytest.approx(64 / 15, rel=0.2)


def test_soft_agent_lags_on_a_brake_fixture():
    traj = brake_and_hold()
    stiff = follow(traj, FollowerConfig(stiffness=1.0)).error.max()
    soft = follow(traj, FollowerConfig(stiffness=0.2)).error.max()
    assert soft > stiff


def test_follow_logs_collisions(box_scene):
    traj = straight_trajectory((2, 10, 0), (18, 10, 0), 41, 5.0)
    log = follow(traj, scene=box_scene)
    assert log.collided
    assert len(log.collisions) == len(log.t)


def test_follow_rejects_non_increasing_times():
    with pytest.raises(ValueError):
        follow(Trajectory(np.array([[0, 0, 0, 0], [1, 0, 0, 0]])))


def test_longitudinal_acceleration_of_a_linear_ramp():
    t = np.arange(0, 5, 0.01)
    v = 2.0 + 1.5 * t
    a = longitudinal_acceleration(t, v, window=0.2)
    # interior samples are exact; the 'nearest' padding only bends the ends
    np.testing.assert_allclose(a[20:-20], 1.5, atol=1e-9)
    assert longitudinal_acceleration(t[:1], v[:1]).shape == (1,)


def test_bin_fractions():
    vals = np.array([0.0, 1.0, -3.4, 3.5, -4.9, 5.0, 7.0, -100.0])
    assert bin_fractions(vals) == pytest.approx((3 / 8, 2 / 8, 3 / 8))
    with pytest.raises(ValueError):
        bin_fractions(np.array([]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=50))
def test_bin_fractions_sum_to_one(vals):
    assert sum(bin_fractions(np.array(vals), (0.0, 1.0, 2.0, 4.0))) == pytest.approx(1.0)


def test_deceleration_proxy():
    straight = straight_trajectory((0, 0, 0), (50, 0, 0), 51, 10.0)
    assert deceleration_proxy(straight) == pytest.approx(0.0, abs=1e-9)
    # 10 m/s for 20 segments, then 5 m/s: one drop of 5 m/s across the 0.1 s -> 0.2 s boundary
    dt = np.concatenate([np.full(20, 0.1), np.full(20, 0.2)])
    t = np.concatenate([[0], np.cumsum(dt)])
    traj = Trajectory(np.column_stack([np.arange(41.0), np.zeros(41), np.zeros(41), t]))
    mids = 0.5 * (t[:-1] + t[1:])
    speeds = np.where(np.arange(40) < 20, 10.0, 5.0)
    # each segment against the first one at least 0.2 s later
    later = [next(j for j in range(40) if mids[j] >= mids[i] + 0.2) for i in range(40) if mids[i] + 0.2 <= mids[-1]]
    expected = max((speeds[i] - speeds[j]) / (mids[j] - mids[i]) for i, j in enumerate(later))
    assert deceleration_proxy(traj) == pytest.approx(expected)
    assert deceleration_proxy(Trajectory(np.array([[0, 0, 0, 0], [1, 0, 0, 1]]))) == 0.0


def test_dynamics_metrics_and_exports(tmp_path):
    traj = brake_and_hold()
    log = follow(traj, FollowerConfig(stiffness=0.7))
    m = dynamics_metrics(log, traj)
    assert isinstance(m, DynamicsMetrics)
    assert m.min_a_long < 0 <= m.max_a_long
    assert m.max_error == pytest.approx(log.error.max(), rel=1e-9)
    assert sum(m.bin_fractions) == pytest.approx(1.0)
    m.to_json(tmp_path / "m.json", {"seed": 1})
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["header"] == {"seed": 1} and doc["metrics"]["bin_edges"] == [0.0, 3.5, 5.0]
    log.to_csv(tmp_path / "d.csv", ["stiffness: 0.7"])
    rows = list(csv.reader(ln for ln in (tmp_path / "d.csv").read_text().splitlines() if not ln.startswith("#")))
    assert rows[0] == ["t", "x", "y", "theta", "v", "a_long", "a_lat", "error"]
    assert len(rows) == len(log.t) + 1
    with pytest.raises(ValueError):
        dynamics_metrics(DriveLog(*[np.zeros(0)] * 8))
