"""Finite-difference checks of every loss term and the field logit on one random configuration.

Shared by the unit tests and the acceptance suite.
"""

import numpy as np

from spacetime_planner import autodiff as ad
from spacetime_planner.field import NeuralField
from spacetime_planner.losses import LagrangeMultipliers, LossWeights, TrajVars, total_loss
from spacetime_planner.trajectory import Trajectory

from conftest import central_difference, random_trajectory, relative_error

V_E = 11.11


def _outputs(tv: TrajVars, field: NeuralField, lam: LagrangeMultipliers, u: np.ndarray,
             proj: np.ndarray) -> dict:
    """Every scalar under test, recorded on the tape of ``tv``; vector terms are projected."""
    loss = total_loss(tv, field, LossWeights(), lam, V_E, None, u)
    names = {"vel": "velocity_loss", "time": "time_regularization", "constr": "constraint_loss",
             "dist": "distance_loss", "col": "collision_loss"}
    out = {names[k]: loss.parts[k] for k in names}
    out["velocity_deltas"] = (loss.parts["delta"] * proj).sum()
    out["nonholonomic_deltas"] = (loss.parts["nu"] * proj).sum()
    out["total_loss"] = loss.total
    return out


def _evaluate(build, states: np.ndarray, with_grads: bool = False):
    """All terms on one tape; optionally one backward pass per term."""
    tv = TrajVars.of(Trajectory(states))
    outs = build(tv)
    values = np.array([float(o.value) for o in outs.values()])
    if not with_grads:
        return values
    return values, {k: tv.grad_array(tv.tape.backward(o)) for k, o in outs.items()}


def check_configuration(seed: int, field: NeuralField, n: int = 6, h: float = 1e-6) -> dict[str, float]:
    """Relative error of analytic vs central-difference gradients, per term."""
    rng = np.random.default_rng(seed)
    traj = random_trajectory(rng, n=n)
    lam = LagrangeMultipliers(rng.normal(size=n), rng.normal(size=n))
    u = rng.random(n)
    proj = rng.normal(size=n)
    def build(tv):
        return _outputs(tv, field, lam, u, proj)

    _, analytic = _evaluate(build, traj.states, with_grads=True)
    # central differences of every term at once: one tape per perturbed coordinate
    states = traj.states.copy()
    numeric = np.zeros((len(analytic),) + states.shape)
    for idx in np.ndindex(states.shape):
        keep = states[idx]
        states[idx] = keep + h
        fp = _evaluate(build, states)
        states[idx] = keep - h
        fm = _evaluate(build, states)
        states[idx] = keep
        numeric[(slice(None),) + idx] = (fp - fm) / (2 * h)
    errors = {k: relative_error(analytic[k], numeric[i]) for i, k in enumerate(analytic)}

    state = np.array([rng.uniform(5, 45), rng.uniform(5, 45), rng.uniform(-3, 3), rng.uniform(0.5, 9.5)])

    def logit(s):
        tape = ad.Tape()
        x = tape.leaf(s[None, :])
        out = field.forward(x)[0]
        return float(out.value), tape.backward(out)[x][0]

    errors["field_logit"] = relative_error(logit(state)[1], central_difference(lambda s: logit(s)[0], state, h))
    return errors
