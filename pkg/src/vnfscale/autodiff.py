"""Minimal reverse-mode autodiff on float64 numpy arrays.

Tensors form a tape; backward() walks it in iterative topological order
(graphs here reach thousands of nodes, deeper than the recursion limit).
Gradients accumulate by summation, and broadcasting in the arithmetic ops
is undone by summing over the broadcast axes.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NonScalarLoss

Array = np.ndarray


def _as_array(x) -> Array:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data: Array = _as_array(data)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[tuple["Tensor", Callable[[Array], Array]], ...] = ()

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _make(data: Array, parents) -> "Tensor":
        tracked = [(p, fn) for p, fn in parents if p.requires_grad]
        out = Tensor(data, requires_grad=bool(tracked))
        out._parents = tuple(tracked)
        return out

    def backward(self):
        if self.data.size != 1:
            raise NonScalarLoss(f"backward needs a scalar, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            g = node.grad
            if g is None:
                continue
            for parent, fn in node._parents:
                contrib = fn(g)
                parent.grad = contrib if parent.grad is None else parent.grad + contrib

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(constant(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: Array, shape: tuple) -> Array:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out_data = a.data + b.data
    return Tensor._make(
        out_data,
        [
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(g, b.data.shape)),
        ],
    )


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    return Tensor._make(
        a.data - b.data,
        [
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(-g, b.data.shape)),
        ],
    )


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    return Tensor._make(
        a.data * b.data,
        [
            (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
            (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
        ],
    )


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return Tensor._make(a.data * s, [(a, lambda g: g * s)])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    return Tensor._make(
        a.data @ b.data,
        [(a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g)],
    )


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return Tensor._make(a.data.reshape(shape), [(a, lambda g: g.reshape(old))])


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.data.ndim)))
    inverse = np.argsort(axes)
    return Tensor._make(
        np.transpose(a.data, axes), [(a, lambda g: np.transpose(g, inverse))]
    )


def concat(ts: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [constant(t) for t in ts]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)
    parents = []
    for i, t in enumerate(ts):
        lo, hi = offsets[i], offsets[i + 1]

        def fn(g, lo=lo, hi=hi):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        parents.append((t, fn))
    return Tensor._make(data, parents)


def stack_rows(ts: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into a 2-D tensor, one per row."""
    return concat([reshape(t, (1, -1)) for t in ts], axis=0)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor._make(np.where(mask, a.data, 0.0), [(a, lambda g: g * mask)])


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0
    factor = np.where(mask, 1.0, slope)
    return Tensor._make(a.data * factor, [(a, lambda g: g * factor)])


def sigmoid(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.where(
            a.data >= 0,
            1.0 / (1.0 + np.exp(-np.maximum(a.data, 0))),
            np.exp(np.minimum(a.data, 0)) / (1.0 + np.exp(np.minimum(a.data, 0))),
        )
    return Tensor._make(y, [(a, lambda g: g * y * (1.0 - y))])


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return Tensor._make(y, [(a, lambda g: g * (1.0 - y * y))])


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return Tensor._make(y, [(a, lambda g: g * y)])


def log(a: Tensor) -> Tensor:
    return Tensor._make(np.log(a.data), [(a, lambda g: g / a.data)])


def rsqrt(a: Tensor) -> Tensor:
    y = 1.0 / np.sqrt(a.data)
    return Tensor._make(y, [(a, lambda g: g * (-0.5) * y**3)])


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.data.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), [(a, fn)])


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.data.shape
    if axis is None:
        n = a.data.size
    else:
        n = shape[axis]

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy() / n

    return Tensor._make(a.data.mean(axis=axis, keepdims=keepdims), [(a, fn)])


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return y * (g - dot)

    return Tensor._make(y, [(a, fn)])


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)

    def fn(g):
        return g - sm * g.sum(axis=axis, keepdims=True)

    return Tensor._make(out, [(a, fn)])


def masked_fill(a: Tensor, mask: Array, value: float) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    keep = ~mask
    return Tensor._make(np.where(mask, value, a.data), [(a, lambda g: g * keep)])


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    shape = a.data.shape

    def fn(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return out

    return Tensor._make(a.data[idx], [(a, fn)])


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    take_a = a.data <= b.data
    return Tensor._make(
        np.where(take_a, a.data, b.data),
        [
            (a, lambda g: _unbroadcast(g * take_a, a.data.shape)),
            (b, lambda g: _unbroadcast(g * ~take_a, b.data.shape)),
        ],
    )


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor._make(np.clip(a.data, lo, hi), [(a, lambda g: g * inside)])


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply an elementwise affine."""
    mu = tmean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = tmean(mul(xc, xc), axis=-1, keepdims=True)
    inv = rsqrt(add(var, eps))
    return add(mul(mul(xc, inv), gain), bias)


def gru_cell(x: Tensor, h: Tensor, p: dict[str, Tensor]) -> Tensor:
    """One gated recurrent step over a batch of rows.

    Convention: z gates how much of the candidate replaces the old state
    (h' = (1-z)*h + z*h_tilde), so all-zero parameters halve the state.
    Parameter keys: wz uz bz wr ur br wh uh bh.
    """
    z = sigmoid(add(add(matmul(x, p["wz"]), matmul(h, p["uz"])), p["bz"]))
    r = sigmoid(add(add(matmul(x, p["wr"]), matmul(h, p["ur"])), p["br"]))
    h_tilde = tanh(add(add(matmul(x, p["wh"]), matmul(mul(r, h), p["uh"])), p["bh"]))
    one_minus_z = sub(1.0, z)
    return add(mul(one_minus_z, h), mul(z, h_tilde))
