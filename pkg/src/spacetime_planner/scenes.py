"""Built-in 50 x 50 m desk-scale scenes.

Streets are the free space between convex building blocks. Every scene has
one moving car (4.5 x 1.9 m at 11.11 m/s) timed to conflict with the naive
constant-speed route, and carries default start and goal poses.
"""

from __future__ import annotations

import math

import numpy as np

from .scene import MovingObstacle, RobotFootprint, Scene, StaticMap

SPEED = 11.11


def _box(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def _straight_mover(p0, heading, t_end=12.0, speed=SPEED, t0=0.0):
    p0 = np.asarray(p0, dtype=float)
    d = np.array([math.cos(heading), math.sin(heading)])
    p1 = p0 + d * speed * (t_end - t0)
    return MovingObstacle(np.array([[*p0, heading, t0], [*p1, heading, t_end]]))


def crossing() -> Scene:
    """Four-way junction; a car crosses northbound just ahead of the ego.

    It clears the right half of the road in time but still blocks the centre line
    when the constant-speed ego reaches the junction.
    """
    polys = [_box(0, 0, 20, 20), _box(30, 0, 50, 20), _box(0, 30, 20, 50), _box(30, 30, 50, 50)]
    mover = _straight_mover((27.5, 26.85 - 1.9 * SPEED), math.pi / 2)
    return Scene(StaticMap((0, 0, 50, 50), polys), (mover,), RobotFootprint(), 10.0,
                 "crossing", (3.0, 25.0, 0.0), (47.0, 25.0, 0.0))


def downtown() -> Scene:
    """Block grid with 7 m streets where the only route is east then north.

    A car crosses the first junction northbound just ahead of the ego; it has
    cleared the ego's right half of the street but still blocks the left half.
    """
    polys = [
        _box(0, 0, 12, 12), _box(19, 0, 31, 12), _box(38, 0, 50, 12),
        _box(0, 19, 12, 50), _box(19, 19, 31, 50), _box(38, 19, 50, 31), _box(38, 38, 50, 50),
    ]
    mover = _straight_mover((16.75, 17.5 - 0.95 * SPEED), math.pi / 2)
    return Scene(StaticMap((0, 0, 50, 50), polys), (mover,), RobotFootprint(), 10.0,
                 "downtown", (3.0, 15.5, 0.0), (34.5, 47.0, math.pi / 2))


def overpass() -> Scene:
    """Diagonal 10 m road; an oncoming car drifts over the centre line."""
    w = 5.0 * math.sqrt(2)
    polys = [[[w, 0], [50, 0], [50, 50 - w]], [[0, w], [50 - w, 50], [0, 50]]]
    heading = -3 * math.pi / 4
    along = np.array([math.cos(heading), math.sin(heading)])
    lateral = np.array([-math.sqrt(0.5), math.sqrt(0.5)])
    p0 = np.array([50.0, 50.0]) - 10.0 * along + 1.5 * lateral
    mover = _straight_mover(p0, heading)
    return Scene(StaticMap((0, 0, 50, 50), polys), (mover,), RobotFootprint(), 10.0,
                 "overpass", (5.0, 5.0, math.pi / 4), (45.0, 45.0, math.pi / 4))


def side_street_turn(lead: float = 9.0) -> Scene:
    """Ego drives east and must turn right into a side street while a car keeps pace
    in the right lane, ``lead`` metres ahead.

    With the default lead the car clears the side street before the ego turns, but
    any snapshot of it taken on the approach sits across the turn.
    """
    polys = [_box(0, 0, 30, 20), _box(40, 0, 50, 20), _box(0, 30, 50, 50)]
    mover = _straight_mover((3.0 + lead, 22.5), 0.0)
    return Scene(StaticMap((0, 0, 50, 50), polys), (mover,), RobotFootprint(), 10.0,
                 "side_street_turn", (3.0, 26.5, 0.0), (35.0, 4.0, -math.pi / 2))


def empty() -> Scene:
    return Scene(StaticMap((0, 0, 50, 50)), (), RobotFootprint(), 10.0,
                 "empty", (5.0, 25.0, 0.0), (45.0, 25.0, 0.0))


DESK_SCENES = {"downtown": downtown, "crossing": crossing, "overpass": overpass}
ALL_SCENES = {**DESK_SCENES, "side_street_turn": side_street_turn, "empty": empty}
