"""Minimal dense-array engine with explicit reverse-mode computation records.

A :class:`Record` is created per forward pass.  Leaves are registered with
``record.leaf(values)``; every primitive applied to a recorded tensor is
appended to that record, in topological order by construction.  Tensors with
no record are constants: they take part in forward arithmetic but receive no
gradient.

    rec = Record()
    x = rec.leaf([[1.0, 2.0]])
    loss = mean(square(x))
    grads = rec.backward(loss)
    grads[x]          # -> ndarray shaped like x
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels


class TensorError(Exception):
    """Base class for engine errors."""


class ShapeError(TensorError, ValueError):
    pass


class NonFiniteError(TensorError, FloatingPointError):
    pass


class RecordError(TensorError, ValueError):
    pass


class Tensor:
    """Shape-carrying float64 array, optionally attached to a :class:`Record`."""

    __slots__ = ("value", "record", "node")

    def __init__(self, values, record: "Record | None" = None, node: int | None = None):
        self.value = np.array(values, dtype=np.float64)
        self.record = record
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def values(self) -> list[float]:
        return self.value.reshape(-1).tolist()

    @property
    def size(self) -> int:
        return self.value.size

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else _not_scalar(self)

    def __repr__(self) -> str:
        tag = f", node={self.node}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, _lift(other, self))

    def __sub__(self, other):
        return subtract(self, _lift(other, self))

    def __mul__(self, other):
        return multiply(self, _lift(other, self))

    def __matmul__(self, other):
        return matmul(self, other)


def _not_scalar(t: Tensor):
    raise ShapeError(f"tensor of shape {t.shape} is not a scalar")


def _lift(other, like: Tensor) -> Tensor:
    if isinstance(other, Tensor):
        return other
    return Tensor(np.full(like.shape, float(other)))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant_like(t: Tensor, fill: float) -> Tensor:
    return Tensor(np.full(t.shape, float(fill)))


@dataclass
class _Node:
    kind: str
    inputs: tuple[int | None, ...]
    in_values: tuple
    saved: object
    value: np.ndarray
    attrs: dict = field(default_factory=dict)


class GradientMap(dict):
    """node-id -> gradient array; also indexable by the recorded Tensor itself."""

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = key.node
        return super().__getitem__(key)

    def __contains__(self, key):
        if isinstance(key, Tensor):
            key = key.node
        return super().__contains__(key)


class Record:
    """Ordered list of primitive applications for one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, values) -> Tensor:
        value = values.value if isinstance(values, Tensor) else np.array(values, dtype=np.float64)
        _check_finite("leaf", value)
        self.nodes.append(_Node("leaf", (), (), None, value))
        return Tensor(value, self, len(self.nodes) - 1)

    def _append(self, kind, inputs, saved, value, attrs) -> Tensor:
        ids = tuple(t.node if t.record is self else None for t in inputs)
        self.nodes.append(_Node(kind, ids, tuple(t.value for t in inputs), saved, value, attrs))
        return Tensor(value, self, len(self.nodes) - 1)

    def backward(self, root: Tensor) -> GradientMap:
        return backward(self, root)


# ---------------------------------------------------------------------------
# primitives: forward rule, shape rule and vector-Jacobian product
# ---------------------------------------------------------------------------

def _same_shape(kind, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not match")


def _unary(kind, inputs):
    if len(inputs) != 1:
        raise ShapeError(f"{kind} takes 1 input, got {len(inputs)}")


def _binary(kind, inputs):
    if len(inputs) != 2:
        raise ShapeError(f"{kind} takes 2 inputs, got {len(inputs)}")


def _reduce_axis(value, axis):
    if axis is None:
        return None
    if not -value.ndim <= axis < value.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {value.shape}")
    return axis % value.ndim


def _fwd_matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    return a @ b, ()


def _vjp_matmul(g, ins, out, saved, attrs):
    a, b = ins
    return g @ b.T, a.T @ g


def _fwd_bias_add(x, b):
    if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"bias_add: shapes {x.shape} and {b.shape} do not conform")
    return x + b, ()


def _vjp_bias_add(g, ins, out, saved, attrs):
    return g, g.sum(axis=0)


def _fwd_softmax(x):
    if x.ndim < 1:
        raise ShapeError(f"softmax: needs at least 1 dimension, got shape {x.shape}")
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True), ()


def _vjp_softmax(g, ins, y, saved, attrs):
    return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)


def _fwd_reduce(fn):
    def forward(x, axis=None):
        ax = _reduce_axis(x, axis)
        if x.size == 0:
            raise ShapeError(f"cannot reduce empty tensor of shape {x.shape}")
        return np.asarray(fn(x, axis=ax)), ax
    return forward


def _vjp_sum(g, ins, out, ax, attrs):
    (x,) = ins
    if ax is not None:
        g = np.expand_dims(g, ax)
    return (np.broadcast_to(g, x.shape).copy(),)


def _vjp_mean(g, ins, out, ax, attrs):
    (x,) = ins
    n = x.size if ax is None else x.shape[ax]
    if ax is not None:
        g = np.expand_dims(g, ax)
    return (np.broadcast_to(g / n, x.shape).copy(),)


_PRIMITIVES: dict[str, tuple[Callable, Callable, Callable]] = {
    # kind: (arity check, forward(values..., **attrs) -> (out, saved), vjp)
    "matmul": (_binary, _fwd_matmul, _vjp_matmul),
    "add": (_binary, lambda a, b: (a + b, ()), lambda g, i, o, s, at: (g, g)),
    "subtract": (_binary, lambda a, b: (a - b, ()), lambda g, i, o, s, at: (g, -g)),
    "multiply": (_binary, lambda a, b: (a * b, ()), lambda g, i, o, s, at: (g * i[1], g * i[0])),
    "relu": (_unary, lambda x: (np.maximum(x, 0.0), ()),
             lambda g, i, o, s, at: (kernels.relu_grad(i[0], g),)),
    "tanh": (_unary, lambda x: (np.tanh(x), ()), lambda g, i, o, s, at: (kernels.tanh_grad(o, g),)),
    "exp": (_unary, lambda x: (np.exp(x), ()), lambda g, i, o, s, at: (g * o,)),
    "log": (_unary, lambda x: (np.log(x), ()), lambda g, i, o, s, at: (g / i[0],)),
    "square": (_unary, lambda x: (x * x, ()), lambda g, i, o, s, at: (2.0 * i[0] * g,)),
    "mean": (_unary, _fwd_reduce(np.mean), _vjp_mean),
    "sum": (_unary, _fwd_reduce(np.sum), _vjp_sum),
    "bias_add": (_binary, _fwd_bias_add, _vjp_bias_add),
    "softmax": (_unary, _fwd_softmax, _vjp_softmax),
}

_ELEMENTWISE_BINARY = {"add", "subtract", "multiply"}

PRIMITIVE_KINDS = tuple(_PRIMITIVES)


def _check_finite(kind, value):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{kind}: produced non-finite values")


def apply_primitive(kind: str, inputs: Sequence[Tensor], **attrs) -> Tensor:
    """Evaluate primitive ``kind`` and record it if any input is recorded."""
    try:
        arity, forward, _ = _PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"unknown primitive {kind!r}; expected one of {PRIMITIVE_KINDS}") from None
    inputs = [as_tensor(t) for t in inputs]
    arity(kind, inputs)
    if kind in _ELEMENTWISE_BINARY:
        _same_shape(kind, inputs[0], inputs[1])

    records = {id(t.record): t.record for t in inputs if t.record is not None}
    if len(records) > 1:
        raise RecordError(f"{kind}: inputs belong to different computation records")
    record = next(iter(records.values()), None)

    values = [t.value for t in inputs]
    with np.errstate(all="ignore"):
        out, saved = forward(*values, **attrs)
    out = np.asarray(out, dtype=np.float64)
    _check_finite(kind, out)
    if record is None:
        return Tensor(out)
    return record._append(kind, inputs, saved, out, attrs)


def backward(record: Record, root: Tensor) -> GradientMap:
    """Gradient of scalar ``root`` w.r.t. every node of ``record``."""
    if root.record is not record or root.node is None:
        raise RecordError("root is not part of this record")
    if any(d != 1 for d in root.shape):
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")

    nodes = record.nodes
    grads: list[np.ndarray | None] = [None] * len(nodes)
    grads[root.node] = np.ones(root.shape)
    for idx in range(root.node, -1, -1):
        g = grads[idx]
        node = nodes[idx]
        if g is None or node.kind == "leaf":
            continue
        vjp = _PRIMITIVES[node.kind][2]
        with np.errstate(all="ignore"):
            in_grads = vjp(g, node.in_values, node.value, node.saved, node.attrs)
        for src, dg in zip(node.inputs, in_grads):
            if src is None:
                continue
            grads[src] = dg if grads[src] is None else grads[src] + dg

    out = GradientMap()
    for idx, g in enumerate(grads):
        out[idx] = g if g is not None else np.zeros_like(nodes[idx].value)
    return out


def gradient_wrt(loss: Tensor, target: Tensor) -> np.ndarray:
    """d loss / d target for a target that was recorded alongside ``loss``."""
    if loss.record is None:
        raise RecordError("loss is not attached to a computation record")
    if target.record is not loss.record or target.node is None:
        raise RecordError("target did not participate in the loss's record")
    return backward(loss.record, loss)[target.node]


def finite_difference_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` per coordinate."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.array(x.value if isinstance(x, Tensor) else x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x.copy()))
        flat[i] = orig - h
        fm = float(f(x.copy()))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """Norm-wise relative error ``|a-b| / max(|a|, |b|, floor)``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


# ---------------------------------------------------------------------------
# functional wrappers
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    return apply_primitive("matmul", [a, b])


def add(a, b) -> Tensor:
    return apply_primitive("add", [a, b])


def subtract(a, b) -> Tensor:
    return apply_primitive("subtract", [a, b])


def multiply(a, b) -> Tensor:
    return apply_primitive("multiply", [a, b])


def relu(x) -> Tensor:
    return apply_primitive("relu", [x])


def tanh(x) -> Tensor:
    return apply_primitive("tanh", [x])


def exp(x) -> Tensor:
    return apply_primitive("exp", [x])


def log(x) -> Tensor:
    return apply_primitive("log", [x])


def square(x) -> Tensor:
    return apply_primitive("square", [x])


def mean(x, axis: int | None = None) -> Tensor:
    return apply_primitive("mean", [x], axis=axis)


def sum(x, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return apply_primitive("sum", [x], axis=axis)


def bias_add(x, b) -> Tensor:
    return apply_primitive("bias_add", [x, b])


def softmax(x) -> Tensor:
    return apply_primitive("softmax", [x])


def scale(x: Tensor, c: float) -> Tensor:
    """``c * x`` via an elementwise multiply with a constant."""
    return multiply(x, constant_like(x, c))
