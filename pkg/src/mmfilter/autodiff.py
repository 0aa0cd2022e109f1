"""Reverse-mode automatic differentiation over small dense tensors.

The graph is rebuilt on every forward pass. Each :class:`Value` keeps its
parents and a closure that pushes its gradient back to them. Tensors are
float64 and at most rank 3, which covers batched sequences (B, T, d).
"""

from __future__ import annotations

import io
from collections import OrderedDict
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .exceptions import ConfigError, ContractError, DimensionError

MAX_RANK = 3


def _as_array(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim > MAX_RANK:
        raise DimensionError(f"rank {arr.ndim} tensors are not supported (max {MAX_RANK})")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out the axes numpy broadcasting added or stretched
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: "Value", b: "Value", op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


class Value:
    """A tensor node in a dynamically built computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _op: str = ""):
        self.data = _as_array(data)
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = _parents if self.requires_grad else ()
        self._backward: Callable[[], None] | None = None
        self._op = _op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Value(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.requires_grad:
            self.grad = self.grad + _unbroadcast(g, self.shape)

    def backward(self) -> None:
        backward(self)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _node(data: np.ndarray, parents: Sequence[Value], op: str) -> Value:
    return Value(data, _parents=tuple(parents), _op=op)


# ---------------------------------------------------------------------------
# binary elementwise ops (numpy broadcasting, gradients reduced back)


def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _broadcast_shape(a, b, "add")
    out = _node(a.data + b.data, (a, b), "add")

    def _backward():
        a._accumulate(out.grad)
        b._accumulate(out.grad)

    out._backward = _backward
    return out


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _broadcast_shape(a, b, "sub")
    out = _node(a.data - b.data, (a, b), "sub")

    def _backward():
        a._accumulate(out.grad)
        b._accumulate(-out.grad)

    out._backward = _backward
    return out


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _broadcast_shape(a, b, "mul")
    out = _node(a.data * b.data, (a, b), "mul")

    def _backward():
        a._accumulate(out.grad * b.data)
        b._accumulate(out.grad * a.data)

    out._backward = _backward
    return out


def scale(a: Value, c: float) -> Value:
    a = as_value(a)
    c = float(c)
    out = _node(a.data * c, (a,), "scale")

    def _backward():
        a._accumulate(out.grad * c)

    out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# unary elementwise ops


def relu(a: Value) -> Value:
    """Rectifier. The subgradient at exactly 0 is taken to be 0."""
    a = as_value(a)
    mask = a.data > 0
    out = _node(np.where(mask, a.data, 0.0), (a,), "relu")

    def _backward():
        a._accumulate(out.grad * mask)

    out._backward = _backward
    return out


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Value) -> Value:
    a = as_value(a)
    s = stable_sigmoid(a.data)
    out = _node(s, (a,), "sigmoid")

    def _backward():
        a._accumulate(out.grad * s * (1.0 - s))

    out._backward = _backward
    return out


def absolute(a: Value) -> Value:
    """|a| with subgradient 0 at 0."""
    a = as_value(a)
    out = _node(np.abs(a.data), (a,), "abs")

    def _backward():
        a._accumulate(out.grad * np.sign(a.data))

    out._backward = _backward
    return out


def clamp(a: Value, lo: float, hi: float) -> Value:
    a = as_value(a)
    inside = (a.data >= lo) & (a.data <= hi)
    out = _node(np.clip(a.data, lo, hi), (a,), "clamp")

    def _backward():
        a._accumulate(out.grad * inside)

    out._backward = _backward
    return out


def exp(a: Value) -> Value:
    a = as_value(a)
    e = np.exp(a.data)
    out = _node(e, (a,), "exp")

    def _backward():
        a._accumulate(out.grad * e)

    out._backward = _backward
    return out


def square(a: Value) -> Value:
    a = as_value(a)
    out = _node(a.data * a.data, (a,), "square")

    def _backward():
        a._accumulate(out.grad * 2.0 * a.data)

    out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# linear algebra and reductions


def matmul(a, b) -> Value:
    """Matrix product, optionally batched over a leading axis.

    Supported layouts: (m,k)@(k,n), (B,m,k)@(k,n) with shared weights, and
    (B,m,k)@(B,k,n).
    """
    a, b = as_value(a), as_value(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise DimensionError(f"matmul: batch sizes differ in {a.shape} and {b.shape}")
    if a.ndim == 2 and b.ndim == 3:
        raise DimensionError(f"matmul: unsupported layout {a.shape} @ {b.shape}")
    out = _node(a.data @ b.data, (a, b), "matmul")

    def _backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            if b.ndim == 2 and gb.ndim == 3:
                gb = gb.sum(axis=0)
            b._accumulate(gb)

    out._backward = _backward
    return out


def transpose(a: Value) -> Value:
    """Swap the last two axes."""
    a = as_value(a)
    out = _node(np.swapaxes(a.data, -1, -2), (a,), "transpose")

    def _backward():
        a._accumulate(np.swapaxes(out.grad, -1, -2))

    out._backward = _backward
    return out


def sum(a: Value, axis: int | None = None) -> Value:  # noqa: A001
    a = as_value(a)
    out = _node(a.data.sum(axis=axis), (a,), "sum")

    def _backward():
        g = out.grad if axis is None else np.expand_dims(out.grad, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    out._backward = _backward
    return out


def mean(a: Value, axis: int | None = None) -> Value:
    a = as_value(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def reshape(a: Value, shape: tuple) -> Value:
    a = as_value(a)
    out = _node(a.data.reshape(shape), (a,), "reshape")

    def _backward():
        a._accumulate(out.grad.reshape(a.shape))

    out._backward = _backward
    return out


def getitem(a: Value, index) -> Value:
    a = as_value(a)
    out = _node(a.data[index], (a,), "getitem")

    def _backward():
        g = np.zeros_like(a.data)
        np.add.at(g, index, out.grad)
        a._accumulate(g)

    out._backward = _backward
    return out


def concat(values: Sequence[Value], axis: int = -1) -> Value:
    values = [as_value(v) for v in values]
    try:
        data = np.concatenate([v.data for v in values], axis=axis)
    except ValueError:
        shapes = [v.shape for v in values]
        raise DimensionError(f"concat: incompatible shapes {shapes}") from None
    out = _node(data, values, "concat")
    splits = np.cumsum([v.shape[axis] for v in values])[:-1]

    def _backward():
        for v, g in zip(values, np.split(out.grad, splits, axis=axis)):
            v._accumulate(g)

    out._backward = _backward
    return out


def pad_axis(a: Value, axis: int, before: int, after: int) -> Value:
    """Zero-pad ``a`` along one axis."""
    a = as_value(a)
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    out = _node(np.pad(a.data, widths), (a,), "pad")
    slicer = [slice(None)] * a.ndim
    slicer[axis] = slice(before, before + a.shape[axis])
    slicer = tuple(slicer)

    def _backward():
        a._accumulate(out.grad[slicer])

    out._backward = _backward
    return out


def softmax(a: Value, axis: int = -1) -> Value:
    a = as_value(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _node(s, (a,), "softmax")

    def _backward():
        g = out.grad
        a._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    out._backward = _backward
    return out


def softmax_scaled(z: Value, lam: float) -> Value:
    """Softmax of ``lam * z`` over the last axis.

    Large ``lam`` sharpens the distribution toward a one-hot vector; the max
    is subtracted before exponentiating so ``lam = 1000`` stays finite.
    """
    if not lam > 0:
        raise ConfigError(f"softmax scale must be positive, got {lam}")
    z = as_value(z)
    if z.shape[-1] < 2:
        raise DimensionError(f"softmax_scaled needs at least 2 components, got shape {z.shape}")
    return softmax(scale(z, lam), axis=-1)


def detach(v: Value) -> Value:
    """Copy of ``v`` with no history; gradients never flow through it."""
    out = Value(np.array(as_value(v).data, copy=True))
    out.grad = np.zeros_like(out.data)
    return out


# ---------------------------------------------------------------------------
# graph traversal


def _topological_order(root: Value) -> list[Value]:
    order: list[Value] = []
    visited: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Value) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node.

    Gradients add onto whatever is already stored; call
    :meth:`ParamStore.zero_grad` between independent updates.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    # intermediate grads are fresh per pass; leaves keep accumulating
    for node in order:
        if node._parents:
            node.grad = np.zeros_like(node.data)
    loss.grad = loss.grad + np.ones_like(loss.data)
    for node in reversed(order):
        if node.requires_grad and node._backward is not None:
            node._backward()


# ---------------------------------------------------------------------------
# parameter storage


class ParamStore:
    """Ordered mapping of parameter name to trainable :class:`Value`."""

    def __init__(self):
        self._params: OrderedDict[str, Value] = OrderedDict()

    def add(self, name: str, data) -> Value:
        """Register a parameter; an existing Value is stored as is."""
        if name in self._params:
            raise ConfigError(f"parameter {name!r} registered twice")
        v = data if isinstance(data, Value) else Value(data, requires_grad=True)
        self._params[name] = v
        return v

    def __getitem__(self, name: str) -> Value:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> Iterable[tuple[str, Value]]:
        return self._params.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def count(self, prefix: str = "") -> int:
        """Number of scalar parameters whose name starts with ``prefix``."""
        return int(np.sum([self._params[n].data.size for n in self.names(prefix)]))

    def zero_grad(self) -> None:
        for v in self._params.values():
            v.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: v.data.copy() for n, v in self._params.items()}

    def save(self, fh: io.BufferedIOBase) -> None:
        """Write the float64 payloads in ``.npz`` form (lossless)."""
        np.savez(fh, **{n: v.data for n, v in self._params.items()})

    @classmethod
    def load(cls, fh) -> "ParamStore":
        store = cls()
        with np.load(fh) as archive:
            for name in archive.files:
                store.add(name, archive[name])
        return store
