"""Differentiable trajectory loss terms and their weighted sum.

Every term accepts either a :class:`Trajectory` (returns plain numbers) or a
:class:`TrajVars` bound to a tape (returns tape variables for backprop).
Headings are used unwrapped in the velocity and distance terms.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .field import NeuralField
from .trajectory import Trajectory


@dataclass
class LossWeights:
    dist: float = 5e1
    col: float = 5e4
    constr: float = 5e1
    vel: float = 1e2
    time: float = 1e2

    def __post_init__(self):
        if any(w < 0 for w in asdict(self).values()):
            raise ValueError("loss weights must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class LagrangeMultipliers:
    vel: np.ndarray
    nh: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> LagrangeMultipliers:
        return cls(np.zeros(n), np.zeros(n))


@dataclass
class TrajVars:
    """Trajectory columns as tape leaves."""

    tape: ad.Tape
    x: ad.Var
    y: ad.Var
    theta: ad.Var
    t: ad.Var

    @classmethod
    def of(cls, traj: Trajectory, tape: ad.Tape | None = None) -> TrajVars:
        tape = tape or ad.Tape()
        s = traj.states
        return cls(tape, tape.leaf(s[:, 0]), tape.leaf(s[:, 1]), tape.leaf(s[:, 2]), tape.leaf(s[:, 3]))

    @property
    def N(self) -> int:
        return self.x.shape[0] - 1

    def grad_array(self, grads: ad.Gradients) -> np.ndarray:
        """Gradients as an ``(N+1, 4)`` array aligned with ``Trajectory.states``."""
        return np.column_stack([grads[self.x], grads[self.y], grads[self.theta], grads[self.t]])


def _bind(traj):
    if isinstance(traj, Trajectory):
        return TrajVars.of(traj), True
    return traj, False


def _out(var, plain):
    if not plain:
        return var
    v = var.value
    return float(v) if v.ndim == 0 else v.copy()


def _diff(v: ad.Var) -> ad.Var:
    return v[1:] - v[:-1]


def velocity_deltas(traj, v_e: float):
    """``v_e * dt_i - |(dx_i, dy_i, dtheta_i)|`` per segment."""
    tv, plain = _bind(traj)
    seg = ad.sqrt(ad.square(_diff(tv.x)) + ad.square(_diff(tv.y)) + ad.square(_diff(tv.theta)))
    return _out(v_e * _diff(tv.t) - seg, plain)


def _lagrangian(delta, lam):
    """Mean of ``delta**2 - lam * delta``; multipliers are constants."""
    if isinstance(delta, ad.Var):
        lam = np.asarray(lam, dtype=float)
        if lam.shape != delta.shape:
            raise ValueError("multiplier length must match the constraint deltas")
        return (ad.square(delta) - delta * lam).mean()
    delta = np.asarray(delta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != delta.shape:
        raise ValueError("multiplier length must match the constraint deltas")
    return float(np.mean(delta**2 - lam * delta))


def velocity_loss(delta, lam_vel):
    return _lagrangian(delta, lam_vel)


def time_regularization(traj):
    tv, plain = _bind(traj)
    return _out(ad.square(_diff(tv.t)).mean(), plain)


def nonholonomic_deltas(traj):
    """Lateral slip of each segment relative to the heading at its start."""
    tv, plain = _bind(traj)
    th = tv.theta[:-1]
    nu = _diff(tv.x) * ad.sin(th) - _diff(tv.y) * ad.cos(th)
    return _out(nu, plain)


def constraint_loss(nu, lam_nh):
    return _lagrangian(nu, lam_nh)


def distance_loss(traj):
    """Mean squared step in ``(x, y, theta)``."""
    tv, plain = _bind(traj)
    sq = ad.square(_diff(tv.x)) + ad.square(_diff(tv.y)) + ad.square(_diff(tv.theta))
    return _out(sq.mean(), plain)


def collision_inputs(tv: TrajVars, u: np.ndarray) -> ad.Var:
    """``(N, 4)`` field inputs: a point at fraction ``u_i`` of each segment,
    stamped with the uniformly redistributed time ``i * t_N / N``."""
    n = tv.N
    xi = tv.x[:-1] + u * _diff(tv.x)
    yi = tv.y[:-1] + u * _diff(tv.y)
    thi = tv.theta[:-1] + u * ad.wrap_angle(_diff(tv.theta))
    ti = tv.t[-1] * (np.arange(n) / n)
    return ad.stack([xi, yi, thi, ti], axis=1)


def collision_loss(traj, field: NeuralField, rng: np.random.Generator, u: np.ndarray | None = None):
    tv, plain = _bind(traj)
    if u is None:
        u = rng.random(tv.N)
    logits = field.forward(collision_inputs(tv, u))
    return _out(ad.softplus(logits).mean(), plain)


@dataclass
class LossBreakdown:
    total: ad.Var
    terms: dict[str, float]
    vars: TrajVars
    delta: np.ndarray
    nu: np.ndarray
    parts: dict[str, ad.Var] = field(default_factory=dict)

    @property
    def value(self) -> float:
        return float(self.total.value)


def total_loss(traj, field: NeuralField, weights: LossWeights, lam: LagrangeMultipliers,
               v_e: float, rng: np.random.Generator, u: np.ndarray | None = None) -> LossBreakdown:
    """Weighted sum of the five terms, recorded on one tape."""
    tv = traj if isinstance(traj, TrajVars) else TrajVars.of(traj)
    delta = velocity_deltas(tv, v_e)
    nu = nonholonomic_deltas(tv)
    parts = {
        "dist": distance_loss(tv),
        "col": collision_loss(tv, field, rng, u),
        "constr": constraint_loss(nu, lam.nh),
        "vel": velocity_loss(delta, lam.vel),
        "time": time_regularization(tv),
    }
    w = weights.as_dict()
    total = None
    for k, v in parts.items():
        term = v * w[k]
        total = term if total is None else total + term
    return LossBreakdown(
        total=total,
        terms={k: float(v.value) for k, v in parts.items()},
        vars=tv,
        delta=delta.value.copy(),
        nu=nu.value.copy(),
        parts={**parts, "delta": delta, "nu": nu},
    )
