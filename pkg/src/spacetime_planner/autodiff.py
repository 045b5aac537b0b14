"""Minimal reverse-mode automatic differentiation on a flat tape.

Values are numpy arrays (0-d for scalars). Each recorded node keeps the
indices of its operands and one vector-Jacobian product per operand, so a
backward pass is a single sweep from the root to the first node.

Elementwise primitives broadcast like numpy. ``matmul``, ``sum``, ``mean``,
``index`` and ``stack`` are the fused vector ops used for MLP layers and for
slicing trajectory arrays.

    >>> tape = Tape()
    >>> x, y = tape.leaf(2.0), tape.leaf(3.0)
    >>> grads = tape.backward(x * y)
    >>> float(grads[x]), float(grads[y])
    (3.0, 2.0)
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Sequence

import numpy as np

ArrayLike = float | int | np.ndarray


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    s = 1.0 / (1.0 + e)
    return np.where(x >= 0, s, e * s)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _elementwise(partials: Sequence[np.ndarray], shapes: Sequence[tuple]):
    return tuple(
        (lambda g, p=p, s=s: _unbroadcast(g * p, s)) for p, s in zip(partials, shapes)
    )


# Each primitive maps operand values (+ static params) to (value, vjps).
def _p_add(a, b):
    return a + b, (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape))


def _p_sub(a, b):
    return a - b, (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(-g, b.shape))


def _p_mul(a, b):
    return a * b, _elementwise((b, a), (a.shape, b.shape))


def _p_div(a, b):
    # a zero divisor is reported by the tape's finiteness check, not as a warning
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a / b
        return out, _elementwise((1.0 / b, -out / b), (a.shape, b.shape))


def _p_neg(a):
    return -a, (lambda g: -g,)


def _p_square(a):
    return a * a, _elementwise((2.0 * a,), (a.shape,))


def _p_sqrt(a):
    if np.any(a < 0):
        raise ValueError("sqrt of negative input")
    out = np.sqrt(a)
    # subgradient 0 at the origin keeps norms of zero-length segments finite
    safe = np.where(out > 0, out, 1.0)
    partial = np.where(out > 0, 0.5 / safe, 0.0)
    return out, _elementwise((partial,), (a.shape,))


def _p_relu(a):
    mask = (a > 0).astype(a.dtype)
    return a * mask, _elementwise((mask,), (a.shape,))


def _p_softplus(a):
    return _softplus(a), _elementwise((_sigmoid(a),), (a.shape,))


def _p_bce_with_logits(z, y):
    out = _softplus(z) - y * z
    return out, _elementwise((_sigmoid(z) - y, -z), (z.shape, y.shape))


def _p_sin(a):
    return np.sin(a), _elementwise((np.cos(a),), (a.shape,))


def _p_cos(a):
    return np.cos(a), _elementwise((-np.sin(a),), (a.shape,))


def _p_atan2(y, x):
    r2 = x * x + y * y
    safe = np.where(r2 > 0, r2, 1.0)
    dy = np.where(r2 > 0, x / safe, 0.0)
    dx = np.where(r2 > 0, -y / safe, 0.0)
    return np.arctan2(y, x), _elementwise((dy, dx), (y.shape, x.shape))


def _p_matmul(a, b):
    out = a @ b

    def ga(g):
        return np.outer(g, b) if b.ndim == 1 else g @ b.T

    def gb(g):
        return a.T @ g

    if a.ndim != 2:
        raise ValueError("matmul expects a 2-D left operand")
    return out, (ga, gb)


def _p_sum(a):
    return np.asarray(a.sum()), (lambda g: np.broadcast_to(g, a.shape).copy(),)


def _p_mean(a):
    n = a.size
    return np.asarray(a.mean()), (lambda g: np.broadcast_to(g / n, a.shape).copy(),)


def _is_basic(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (slice, int)) for k in parts)


def _p_index(a, *, key):
    basic = _is_basic(key)

    def vjp(g):
        out = np.zeros_like(a)
        if basic:
            out[key] += g
        else:
            np.add.at(out, key, g)
        return out

    return np.array(a[key], dtype=float), (vjp,)


def _p_stack(*cols, axis=-1):
    out = np.stack(cols, axis=axis)
    vjps = tuple(
        (lambda g, i=i: np.take(g, i, axis=axis)) for i in range(len(cols))
    )
    return out, vjps


PRIMITIVES: dict[str, Callable] = {
    "add": _p_add,
    "sub": _p_sub,
    "mul": _p_mul,
    "div": _p_div,
    "neg": _p_neg,
    "square": _p_square,
    "sqrt": _p_sqrt,
    "relu": _p_relu,
    "softplus": _p_softplus,
    "bce_with_logits": _p_bce_with_logits,
    "sin": _p_sin,
    "cos": _p_cos,
    "atan2": _p_atan2,
    "matmul": _p_matmul,
    "sum": _p_sum,
    "mean": _p_mean,
    "index": _p_index,
    "stack": _p_stack,
}


class _Node(NamedTuple):
    op: str
    value: np.ndarray
    parents: tuple[int, ...]
    vjps: tuple[Callable, ...]


class Var:
    """Handle to a node on a :class:`Tape`."""

    __slots__ = ("tape", "index")
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Var(#{self.index}, {self.value!r})"

    def __add__(self, o):
        return self.tape.record("add", self, o)

    def __radd__(self, o):
        return self.tape.record("add", o, self)

    def __sub__(self, o):
        return self.tape.record("sub", self, o)

    def __rsub__(self, o):
        return self.tape.record("sub", o, self)

    def __mul__(self, o):
        return self.tape.record("mul", self, o)

    def __rmul__(self, o):
        return self.tape.record("mul", o, self)

    def __truediv__(self, o):
        return self.tape.record("div", self, o)

    def __rtruediv__(self, o):
        return self.tape.record("div", o, self)

    def __neg__(self):
        return self.tape.record("neg", self)

    def __matmul__(self, o):
        return self.tape.record("matmul", self, o)

    def __getitem__(self, key):
        return self.tape.record("index", self, key=key)

    def sum(self):
        return self.tape.record("sum", self)

    def mean(self):
        return self.tape.record("mean", self)


class Gradients:
    """Result of a backward pass; unreachable leaves read as zeros."""

    def __init__(self, tape: Tape, grads: list):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, var: Var | int) -> np.ndarray:
        idx = var.index if isinstance(var, Var) else var
        g = self._grads[idx]
        if g is None:
            return np.zeros_like(self._tape.nodes[idx].value)
        return g

    def as_dict(self) -> dict[int, np.ndarray]:
        return {i: self[i] for i in range(len(self._grads))}


class Tape:
    """Append-only record of operations. One tape per loss evaluation."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, op, value, parents=(), vjps=()) -> Var:
        self.nodes.append(_Node(op, value, tuple(parents), tuple(vjps)))
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value: ArrayLike) -> Var:
        value = np.array(value, dtype=float)
        if not math.isfinite(value.sum()) and not np.all(np.isfinite(value)):
            raise FloatingPointError("non-finite leaf value")
        return self._push("leaf", value)

    const = leaf

    def _as_var(self, x) -> Var:
        if isinstance(x, Var):
            if x.tape is not self:
                raise ValueError("operand belongs to a different tape")
            return x
        return self.leaf(x)

    def record(self, op: str, *operands, **params) -> Var:
        prim = PRIMITIVES.get(op)
        if prim is None:
            raise ValueError(f"unknown primitive {op!r}")
        nodes = self.nodes
        parents, values = [], []
        for o in operands:
            v = o if type(o) is Var else self._as_var(o)
            if v.tape is not self:
                raise ValueError("operand belongs to a different tape")
            parents.append(v.index)
            values.append(nodes[v.index].value)
        value, vjps = prim(*values, **params)
        if type(value) is not np.ndarray or value.dtype != np.float64:
            value = np.asarray(value, dtype=float)
        # a NaN or inf anywhere makes the sum non-finite; cheaper than an elementwise mask
        if not math.isfinite(value.sum()) and not np.all(np.isfinite(value)):
            raise FloatingPointError(f"{op} produced a non-finite value")
        nodes.append(_Node(op, value, tuple(parents), tuple(vjps)))
        return Var(self, len(nodes) - 1)

    def backward(self, root: Var) -> Gradients:
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        if root.value.size != 1:
            raise ValueError("backward needs a scalar root")
        grads: list = [None] * len(self.nodes)
        grads[root.index] = np.ones_like(root.value)
        for i in range(root.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = self.nodes[i]
            for p, vjp in zip(node.parents, node.vjps):
                contrib = vjp(g)
                grads[p] = contrib if grads[p] is None else grads[p] + contrib
        return Gradients(self, grads)


def _tape_of(operands) -> Tape:
    tapes = {id(o.tape): o.tape for o in operands if isinstance(o, Var)}
    if len(tapes) != 1:
        raise ValueError("operands must share exactly one tape")
    return next(iter(tapes.values()))


def _unary(op):
    def f(a: Var) -> Var:
        return _tape_of([a]).record(op, a)

    f.__name__ = op
    return f


def _binary(op):
    def f(a, b) -> Var:
        return _tape_of([a, b]).record(op, a, b)

    f.__name__ = op
    return f


add, sub, mul, div = (_binary(o) for o in ("add", "sub", "mul", "div"))
neg, square, sqrt, relu = (_unary(o) for o in ("neg", "square", "sqrt", "relu"))
softplus, sin, cos = (_unary(o) for o in ("softplus", "sin", "cos"))
atan2 = _binary("atan2")
bce_with_logits = _binary("bce_with_logits")
matmul = _binary("matmul")


def stack(cols: Sequence[Var | ArrayLike], axis: int = -1) -> Var:
    return _tape_of(cols).record("stack", *cols, axis=axis)


def wrap_angle(d: Var) -> Var:
    """Map an angle difference to (-pi, pi] through ``atan2(sin, cos)``."""
    return atan2(sin(d), cos(d))
