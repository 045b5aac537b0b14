"""Online-trained MLP collision field over ``(x, y, theta, t)``.

The network is 4 -> 128 -> 128 -> 128 -> 1 with ReLU on the hidden layers and
returns a collision logit. Inputs are mapped affinely to [-1, 1]^4 using the
scene bounds, theta in [-pi, pi] (no wrapping) and t in [0, t_max].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .adam import Adam
from .scene import Scene
from .trajectory import Trajectory

LAYER_SIZES = (4, 128, 128, 128, 1)


@dataclass
class FieldTrainConfig:
    lr: float = 1e-2
    betas: tuple[float, float] = (0.9, 0.9)
    batch_size: int = 256
    tube_radius: float = 4.0
    # tube headings: within +-spread of the path heading, or uniform when None
    heading_spread: float | None = 0.8
    time_jitter: float = 0.2
    uniform_fraction: float = 0.25
    label_margin: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not all(0 <= b < 1 for b in self.betas):
            raise ValueError("betas must lie in [0, 1)")


class NeuralField:
    def __init__(self, lows, highs, seed: int = 0, config: FieldTrainConfig | None = None,
                 sizes=LAYER_SIZES, time_input: float | None = None):
        self.config = config or FieldTrainConfig()
        self.sizes = tuple(sizes)
        self.lows = np.asarray(lows, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        self.scale = 2.0 / (self.highs - self.lows)
        self.shift = -1.0 - self.lows * self.scale
        # when set, the time column is replaced by this constant (static field)
        self.time_input = time_input
        rng = np.random.default_rng(seed)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, fan_out))
        self.adam = Adam([p.shape for p in self.params], self.config.betas)

    @classmethod
    def for_scene(cls, scene: Scene, seed: int = 0, config: FieldTrainConfig | None = None,
                  time_input: float | None = None) -> NeuralField:
        xmin, ymin, xmax, ymax = scene.bounds
        return cls([xmin, ymin, -math.pi, 0.0], [xmax, ymax, math.pi, scene.t_max],
                   seed, config, time_input=time_input)

    def zero_(self) -> NeuralField:
        for p in self.params:
            p[...] = 0.0
        return self

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def _prepare(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if self.time_input is not None:
            states = states.copy()
            states[:, 3] = self.time_input
        return states

    def logits(self, states) -> np.ndarray:
        """Plain numpy forward pass for a batch of states."""
        h = self._prepare(states) * self.scale + self.shift
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n_layers - 1:
                h = np.maximum(h, 0.0)
        return h[:, 0]

    def forward(self, inputs: ad.Var, params=None) -> ad.Var:
        """Differentiable forward pass of ``(n, 4)`` inputs; returns ``(n,)`` logits.

        ``params`` are tape variables for the weights; constants are used otherwise.
        """
        tape = inputs.tape
        if params is None:
            params = self.params
        scale, shift = self.scale, self.shift
        if self.time_input is not None:
            # t column contributes a constant: zero its scale, fold it into the shift
            scale = scale.copy()
            shift = shift.copy()
            shift[3] += scale[3] * self.time_input
            scale[3] = 0.0
        h = inputs * scale + shift
        n_layers = len(params) // 2
        for k in range(n_layers):
            h = h @ params[2 * k] + params[2 * k + 1]
            if k < n_layers - 1:
                h = ad.relu(h)
        return h[:, 0]

    # -- checkpoints --------------------------------------------------------------
    def save(self, path: str | Path) -> None:
        header = {
            "sizes": list(self.sizes),
            "lows": self.lows.tolist(),
            "highs": self.highs.tolist(),
            "time_input": self.time_input,
        }
        arrays = {f"p{i}": p for i, p in enumerate(self.params)}
        np.savez(path, header=np.array(json.dumps(header)), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> NeuralField:
        with np.load(path) as data:
            header = json.loads(str(data["header"]))
            field = cls(header["lows"], header["highs"], sizes=header["sizes"],
                        time_input=header["time_input"])
            field.params = [data[f"p{i}"].copy() for i in range(len(field.params))]
        return field


def field_logit(field: NeuralField, state) -> float:
    return float(field.logits(np.asarray(state, dtype=float)[None, :])[0])


def bce_loss(field: NeuralField, states: np.ndarray, labels: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean BCE-with-logits and its gradient with respect to the parameters."""
    tape = ad.Tape()
    pvars = [tape.leaf(p) for p in field.params]
    x = tape.const(field._prepare(states))
    logits = field.forward(x, pvars)
    loss = ad.bce_with_logits(logits, tape.const(np.asarray(labels, dtype=float))).mean()
    grads = tape.backward(loss)
    return float(loss.value), [grads[v] for v in pvars]


def field_train_step(field: NeuralField, states: np.ndarray, labels: np.ndarray) -> float:
    """One Adam step on the batch; returns the loss before the update."""
    if len(states) == 0:
        raise ValueError("empty batch")
    loss, grads = bce_loss(field, states, labels)
    for p, d in zip(field.params, field.adam.step(grads, field.config.lr)):
        p += d
    return loss


def sample_training_batch(scene: Scene, traj: Trajectory | None, config: FieldTrainConfig,
                          rng: np.random.Generator, time_slice: float | None = None):
    """States in a tube around ``traj`` plus a scene-wide uniform share, with labels.

    With ``time_slice`` set, labels come from obstacles frozen at that time and the
    time column is left at 0 (the static field ignores it anyway).
    """
    n = config.batch_size
    xmin, ymin, xmax, ymax = scene.bounds
    n_uni = n if traj is None else int(round(n * config.uniform_fraction))
    uni = np.column_stack([
        rng.uniform(xmin, xmax, n_uni),
        rng.uniform(ymin, ymax, n_uni),
        rng.uniform(-math.pi, math.pi, n_uni),
        rng.uniform(0.0, scene.t_max, n_uni),
    ])
    parts = [uni]
    if traj is not None:
        m = n - n_uni
        seg = rng.integers(0, traj.N, m)
        u = rng.random(m)
        a, b = traj.states[seg], traj.states[seg + 1]
        centre = a[:, :2] + u[:, None] * (b[:, :2] - a[:, :2])
        t_n = traj.t[-1]
        t_centre = (seg + u) * (t_n / traj.N)
        if config.heading_spread is None:
            heading = rng.uniform(-math.pi, math.pi, m)
        else:
            heading = a[:, 2] + rng.uniform(-config.heading_spread, config.heading_spread, m)
        r = config.tube_radius * np.sqrt(rng.random(m))
        ang = rng.uniform(-math.pi, math.pi, m)
        tube = np.column_stack([
            np.clip(centre[:, 0] + r * np.cos(ang), xmin, xmax),
            np.clip(centre[:, 1] + r * np.sin(ang), ymin, ymax),
            heading,
            np.clip(t_centre + rng.uniform(-1, 1, m) * config.time_jitter * t_n, 0.0, scene.t_max),
        ])
        parts.append(tube)
    states = np.vstack(parts)
    if time_slice is None:
        labels = scene.collisions(states, config.label_margin)
    else:
        states[:, 3] = 0.0
        labels = scene.frozen(time_slice).collisions(states, config.label_margin)
    return states, labels.astype(float)


def replan_field_refit(field: NeuralField, scene: Scene, time_slice: float,
                       traj: Trajectory | None = None, steps: int = 50,
                       rng: np.random.Generator | None = None) -> NeuralField:
    """Continue training a static (time-less) field on obstacles frozen at ``time_slice``."""
    if field.time_input is None:
        raise ValueError("refit expects a field with a constant time input")
    rng = rng if rng is not None else np.random.default_rng(field.config.seed)
    for _ in range(steps):
        states, labels = sample_training_batch(scene, traj, field.config, rng, time_slice)
        field_train_step(field, states, labels)
    return field


def classification_accuracy(field: NeuralField, states: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean((field.logits(states) > 0) == (np.asarray(labels) > 0.5)))
