"""Planning loop: online field training interleaved with preconditioned Adam steps
on the trajectory, multiplier ascent and periodic time redistribution.

Also hosts the continuous-replanning baseline, which re-solves a static problem
with obstacles frozen at each replan instant and commits one replan period of
motion per step.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import linalg

from .adam import Adam, triangular_lr
from .field import FieldTrainConfig, NeuralField, field_train_step, replan_field_refit, sample_training_batch
from .losses import LagrangeMultipliers, LossWeights, total_loss
from .scene import Scene, wrap_to_pi
from .trajectory import Trajectory, astar_seed, resample_polyline, uniform_times

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class PlannerConfig:
    """Every tunable of the planner, flat so it maps one-to-one onto CLI flags."""

    n_segments: int = 100
    iterations: int = 1000
    v_e: float = 11.11
    w_dist: float = 5e1
    w_col: float = 150.0
    w_constr: float = 5e1
    w_vel: float = 1e2
    w_time: float = 1e2
    alpha: float = 5.0
    lr_lo: float = 1e-2
    lr_hi: float = 1e-1
    lr_period: int = 50
    beta1: float = 0.9
    beta2: float = 0.9
    lambda_lr: float = 1e-1
    reparam_every: int = 10
    dt_min: float = 1e-3
    best_after: float = 0.5
    grid_resolution: float = 0.5
    field_lr: float = 1e-2
    field_batch: int = 256
    field_warmup: int = 500
    tube_radius: float = 4.0
    heading_spread: float = 0.8  # negative: tube headings uniform over the circle
    time_jitter: float = 0.2
    uniform_fraction: float = 0.25
    label_margin: float = 0.3
    replan_period: float = 1.0
    replan_iterations: int = 200
    replan_refit_steps: int = 50
    replan_steps: int = -1  # -1: replan until the goal is reached
    seed: int = 0

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.w_dist, self.w_col, self.w_constr, self.w_vel, self.w_time)

    def field_config(self) -> FieldTrainConfig:
        return FieldTrainConfig(
            lr=self.field_lr, betas=(self.beta1, self.beta2), batch_size=self.field_batch,
            tube_radius=self.tube_radius, time_jitter=self.time_jitter,
            heading_spread=self.heading_spread if self.heading_spread >= 0 else None,
            uniform_fraction=self.uniform_fraction, label_margin=self.label_margin, seed=self.seed,
        )

    def as_dict(self) -> dict:
        return asdict(self)

    def updated(self, **overrides) -> PlannerConfig:
        """Copy with overrides; string values are coerced to the field's type."""
        types = {f.name: type(getattr(self, f.name)) for f in fields(self)}
        clean = {}
        for k, v in overrides.items():
            if k not in types:
                raise KeyError(f"unknown config key {k!r}")
            clean[k] = types[k](v) if not isinstance(v, types[k]) else v
        return PlannerConfig(**{**asdict(self), **clean})


# -- preconditioner ---------------------------------------------------------------

def laplacian(n: int, free_end: bool = False) -> np.ndarray:
    """Second-difference matrix of ``n`` unknowns between fixed neighbours;
    with ``free_end`` the last unknown has no right neighbour."""
    L = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    if free_end:
        L[-1, -1] = 1.0
    return L


@dataclass
class Preconditioner:
    H_P: np.ndarray
    H_T: np.ndarray
    M_P: np.ndarray
    M_T: np.ndarray
    alpha: float
    eta: float

    def apply(self, g_p: np.ndarray, g_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.M_P @ g_p, self.M_T @ g_t


def build_preconditioner(n: int, weights: LossWeights, alpha: float = 5.0, eta: float = 1.0) -> Preconditioner:
    """``eta * (alpha * H + I)^-1`` for the spatial and temporal blocks.

    ``H_P`` is the Hessian of ``w_dist * L_dist`` in one coordinate of the
    interior states (shared by x, y and theta); ``H_T`` the Hessian of
    ``w_time * L_time`` in ``t_1 .. t_N``.
    """
    if n < 2:
        raise ValueError("need N >= 2")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    H_P = (2.0 * weights.dist / n) * laplacian(n - 1)
    H_T = (2.0 * weights.time / n) * laplacian(n, free_end=True)

    def inv(H):
        A = alpha * H + np.eye(len(H))
        M = linalg.cho_solve(linalg.cho_factor(A), np.eye(len(H)))
        return eta * 0.5 * (M + M.T)

    return Preconditioner(H_P, H_T, inv(H_P), inv(H_T), alpha, eta)


def lagrange_ascent_step(lam: np.ndarray, delta: np.ndarray, lr: float) -> np.ndarray:
    """Dual ascent on ``-lam * delta``: ``lam - lr * delta``."""
    lam = np.asarray(lam, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if lam.shape != delta.shape:
        raise ValueError("length mismatch")
    return lam - lr * delta


def enforce_monotone_time(t: np.ndarray, dt_min: float) -> np.ndarray:
    out = t.copy()
    for i in range(1, len(out)):
        if out[i] < out[i - 1] + dt_min:
            out[i] = out[i - 1] + dt_min
    return out


# -- planning loop ------------------------------------------------------------------

@dataclass
class PlanResult:
    trajectory: Trajectory
    loss_history: list[float]
    field: NeuralField
    planning_time: float
    iterations: int
    seed_trajectory: Trajectory | None = None
    multipliers: LagrangeMultipliers | None = None
    best_iteration: int = -1
    steps: list[Trajectory] = field(default_factory=list)
    drift_times: np.ndarray | None = None


@dataclass
class InnerResult:
    """Outcome of one inner optimization run.

    ``drift_times`` are the best candidate's time stamps at the end of its
    re-timing interval, just before they were reset to uniform spacing; they show
    how far the optimizer pulls the time profile away from uniform.
    """

    trajectory: Trajectory
    history: list[float]
    multipliers: LagrangeMultipliers
    best_iteration: int
    drift_times: np.ndarray | None = None


def optimize_trajectory(traj: Trajectory, field: NeuralField, scene: Scene, cfg: PlannerConfig,
                        iterations: int, rng: np.random.Generator,
                        time_slice: float | None = None,
                        preconditioner: Preconditioner | None = None) -> InnerResult:
    """Run the inner loop from ``traj`` and return the best candidate.

    ``time_slice`` switches to the static variant: labels come from obstacles
    frozen at that time and ``field`` must ignore its time input.
    """
    traj = traj.copy()
    n = traj.N
    weights = cfg.weights
    pre = preconditioner or build_preconditioner(n, weights, cfg.alpha)
    adam_p = Adam([(n - 1, 3)], (cfg.beta1, cfg.beta2))
    adam_t = Adam([(n,)], (cfg.beta1, cfg.beta2))
    lam = LagrangeMultipliers.zeros(n)
    history: list[float] = []
    best, best_loss, best_it, drift = traj.copy(), math.inf, -1, None
    first_tracked = int(cfg.best_after * iterations)

    for it in range(iterations):
        states, labels = sample_training_batch(scene, traj, field.config, rng, time_slice)
        try:
            field_train_step(field, states, labels)
            terms = total_loss(traj, field, weights, lam, cfg.v_e, rng)
            grads = terms.vars.tape.backward(terms.total)
        except FloatingPointError as err:
            raise NonFiniteLossError(f"non-finite loss at iteration {it}: {err}") from err
        loss = terms.value
        if not math.isfinite(loss):
            raise NonFiniteLossError(f"non-finite loss at iteration {it}: {terms.terms}")
        history.append(loss)
        # candidates are taken right after a redistribution, so their stored times are the
        # uniform stamps the collision term saw, and ranked without the multiplier terms,
        # which drift with the duals
        if it >= first_tracked and it % cfg.reparam_every == 1 % cfg.reparam_every:
            penalty = loss + weights.vel * np.mean(lam.vel * terms.delta) + weights.constr * np.mean(lam.nh * terms.nu)
            if penalty < best_loss:
                best, best_loss, best_it, drift = traj.copy(), penalty, it, None

        g = terms.vars.grad_array(grads)
        lr = triangular_lr(it, cfg.lr_lo, cfg.lr_hi, cfg.lr_period)
        g_p, g_t = pre.apply(g[1:-1, :3], g[1:, 3])
        (d_p,) = adam_p.step([g_p], lr)
        (d_t,) = adam_t.step([g_t], lr)
        traj.states[1:-1, :3] += d_p
        traj.states[1:, 3] += d_t

        lam.vel = lagrange_ascent_step(lam.vel, terms.delta, cfg.lambda_lr)
        lam.nh = lagrange_ascent_step(lam.nh, terms.nu, cfg.lambda_lr)

        if it % cfg.reparam_every == 0:
            if best_it == it - cfg.reparam_every + 1:
                drift = enforce_monotone_time(traj.t, cfg.dt_min)
            traj.states[:, 3] = uniform_times(traj.t[-1], n)
        traj.states[:, 3] = enforce_monotone_time(traj.t, cfg.dt_min)

    if best_it < 0:
        best = traj.copy()
    if drift is None:
        # the run ended inside the best candidate's interval
        drift = traj.t.copy()
    return InnerResult(best, history, lam, best_it, drift)


def _seed(scene: Scene, start, goal, cfg: PlannerConfig) -> Trajectory:
    return astar_seed(scene, start, goal, cfg.grid_resolution, cfg.v_e, cfg.n_segments + 1)


def _warmup(field: NeuralField, scene: Scene, traj: Trajectory, steps: int, rng, time_slice=None):
    for _ in range(steps):
        states, labels = sample_training_batch(scene, traj, field.config, rng, time_slice)
        field_train_step(field, states, labels)


def plan(scene: Scene, start, goal, cfg: PlannerConfig | None = None) -> PlanResult:
    """Plan a time-profiled trajectory against the known obstacle motion."""
    cfg = cfg or PlannerConfig()
    t0 = time.perf_counter()
    seed = _seed(scene, start, goal, cfg)
    if seed.N < 2:
        return PlanResult(seed, [], NeuralField.for_scene(scene, cfg.seed, cfg.field_config()),
                          time.perf_counter() - t0, 0, seed)
    rng = np.random.default_rng(cfg.seed)
    field = NeuralField.for_scene(scene, cfg.seed, cfg.field_config())
    _warmup(field, scene, seed, cfg.field_warmup, rng)
    inner = optimize_trajectory(seed, field, scene, cfg, cfg.iterations, rng)
    return PlanResult(inner.trajectory, inner.history, field, time.perf_counter() - t0, cfg.iterations,
                      seed, inner.multipliers, inner.best_iteration, drift_times=inner.drift_times)


def _remaining(traj: Trajectory, t_cut: float, n_states: int, v_e: float) -> Trajectory:
    """Part of ``traj`` after ``t_cut``, re-timed from 0 and resampled by arclength."""
    th = traj.theta[0] + np.concatenate([[0.0], np.cumsum(wrap_to_pi(np.diff(traj.theta)))])
    head = np.array([*traj.pose_at(t_cut), t_cut])
    keep = traj.states[traj.t > t_cut]
    rows = np.vstack([head, np.column_stack([keep[:, :2], th[traj.t > t_cut], keep[:, 3]])])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(rows[:, :2], axis=0), axis=1))])
    xy = resample_polyline(rows[:, :2], n_states)
    sq = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))])
    if s[-1] <= 1e-9:
        return Trajectory(np.column_stack([xy, np.full(n_states, rows[0, 2]), np.linspace(0, 1e-3, n_states)]))
    theta = np.interp(sq, s, rows[:, 2])
    tt = np.interp(sq, s, rows[:, 3]) - t_cut
    tt = enforce_monotone_time(tt, 1e-6)
    return Trajectory(np.column_stack([xy, theta, tt]))


def plan_static(scene: Scene, start, goal, cfg: PlannerConfig | None = None, t_freeze: float = 0.0) -> PlanResult:
    """One static plan with obstacles frozen at ``t_freeze`` (a baseline step with M = 0)."""
    cfg = cfg or PlannerConfig()
    return plan_replanning_baseline(scene, start, goal, cfg.updated(replan_steps=0), t_freeze)


def plan_replanning_baseline(scene: Scene, start, goal, cfg: PlannerConfig | None = None,
                             t_start: float = 0.0) -> PlanResult:
    """Continuous replanning: static plans against obstacles frozen at each replan time.

    Each step commits ``replan_period`` seconds of the current plan and warm-starts
    the next plan from the remainder. The returned trajectory is the stitched,
    executed motion; ``steps`` holds every intermediate plan.
    """
    cfg = cfg or PlannerConfig()
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    current = _seed(scene, start, goal, cfg)
    field = NeuralField.for_scene(scene, cfg.seed, cfg.field_config(), time_input=0.0)
    if current.N < 2:
        return PlanResult(current, [], field, time.perf_counter() - t0, 0, current)
    max_steps = cfg.replan_steps if cfg.replan_steps >= 0 else 60
    committed: list[np.ndarray] = []
    history: list[float] = []
    steps: list[Trajectory] = []
    seed = current.copy()
    total_iters = 0
    for j in range(max_steps + 1):
        t_abs = t_start + j * cfg.replan_period
        if j == 0:
            _warmup(field, scene, current, cfg.field_warmup, rng, time_slice=t_abs)
        else:
            replan_field_refit(field, scene, t_abs, current, cfg.replan_refit_steps, rng)
        iters = cfg.iterations if j == 0 else cfg.replan_iterations
        inner = optimize_trajectory(current, field, scene, cfg, iters, rng, time_slice=t_abs)
        current = inner.trajectory
        history.extend(inner.history)
        total_iters += iters
        shifted = current.copy()
        shifted.states[:, 3] += j * cfg.replan_period
        steps.append(shifted)
        if j == max_steps or current.t[-1] <= cfg.replan_period:
            committed.append(shifted.states)
            break
        part = shifted.states[current.t < cfg.replan_period]
        committed.append(part)
        current = _remaining(current, cfg.replan_period, cfg.n_segments + 1, cfg.v_e)
    stitched = np.vstack(committed)
    stitched[:, 2] = stitched[0, 2] + np.concatenate([[0.0], np.cumsum(wrap_to_pi(np.diff(stitched[:, 2])))])
    return PlanResult(Trajectory(stitched), history, field, time.perf_counter() - t0, total_iters,
                      seed, None, -1, steps)
