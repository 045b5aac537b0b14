"""Trajectories shared by the follower tests and the acceptance suite."""

import numpy as np

from spacetime_planner.trajectory import Trajectory


def brake_and_hold(v0: float = 11.11, v1: float = 3.0, decel: float = 5.0, brake_at: float = 20.0,
                   length: float = 60.0, n_states: int = 201) -> Trajectory:
    """Straight road: cruise at ``v0``, brake at ``decel`` from ``brake_at`` metres down to ``v1``, hold."""
    s = np.linspace(0.0, length, n_states)
    brake_len = (v0**2 - v1**2) / (2 * decel)
    v = np.where(s < brake_at, v0,
                 np.where(s < brake_at + brake_len,
                          np.sqrt(np.maximum(v0**2 - 2 * decel * (s - brake_at), v1**2)), v1))
    # time from the mean slowness of each segment
    slow = 0.5 * (1 / v[:-1] + 1 / v[1:])
    t = np.concatenate([[0.0], np.cumsum(np.diff(s) * slow)])
    return Trajectory(np.column_stack([s, np.zeros_like(s), np.zeros_like(s), t]))
