"""Adam with an externally supplied step size, plus the triangular cyclic schedule."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam moments for a list of arrays; ``step`` returns the updates to add."""

    def __init__(self, shapes, betas=(0.9, 0.9), eps=1e-8):
        b1, b2 = betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        self.betas = (b1, b2)
        self.eps = eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, grads, lr: float) -> list[np.ndarray]:
        b1, b2 = self.betas
        self.t += 1
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        out = []
        for i, g in enumerate(grads):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            out.append(-lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def triangular_lr(iteration: int, lo: float = 1e-2, hi: float = 1e-1, period: int = 50) -> float:
    """Triangular wave: ``lo`` at the start of each period, ``hi`` half-way through."""
    frac = (iteration % period) / period
    return lo + (hi - lo) * (1.0 - abs(2.0 * frac - 1.0))
