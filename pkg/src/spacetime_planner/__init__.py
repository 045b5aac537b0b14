"""Gradient-based spatio-temporal trajectory optimization for a car-like robot.

A learned collision field over ``(x, y, theta, t)`` lets the optimizer move both
the path and its timing around moving obstacles in one planning pass.

    >>> from spacetime_planner import ALL_SCENES, PlannerConfig, plan
    >>> scene = ALL_SCENES["crossing"]()
    >>> result = plan(scene, scene.start, scene.goal, PlannerConfig(iterations=50))  # doctest: +SKIP
"""

from .field import FieldTrainConfig, NeuralField
from .harness import DriveLog, FollowerConfig, deceleration_proxy, dynamics_metrics, follow
from .losses import LagrangeMultipliers, LossWeights, total_loss
from .optimizer import (
    NonFiniteLossError,
    PlannerConfig,
    PlanResult,
    build_preconditioner,
    optimize_trajectory,
    plan,
    plan_replanning_baseline,
    plan_static,
)
from .scene import MovingObstacle, RobotFootprint, Scene, StaticMap, in_collision
from .scenes import ALL_SCENES, DESK_SCENES
from .trajectory import NoPathError, PathMetrics, Trajectory, path_metrics, supersample

__version__ = "0.1.0"

__all__ = [
    "ALL_SCENES", "DESK_SCENES", "DriveLog", "FieldTrainConfig", "FollowerConfig",
    "LagrangeMultipliers", "LossWeights", "MovingObstacle", "NeuralField", "NoPathError",
    "NonFiniteLossError", "PathMetrics", "PlanResult", "PlannerConfig", "RobotFootprint",
    "Scene", "StaticMap", "Trajectory", "build_preconditioner", "deceleration_proxy",
    "dynamics_metrics", "follow", "in_collision", "optimize_trajectory", "path_metrics",
    "plan", "plan_replanning_baseline", "plan_static", "supersample", "total_loss",
]
