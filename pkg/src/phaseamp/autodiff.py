"""Reverse-mode automatic differentiation over numpy arrays.

Small tape-based engine: every op records a vector-Jacobian product, and
``backward`` walks the graph once in reverse topological order.  All values
are float64.  Conventions relied on by the losses: d|v|/dv = sign(v) with
sign(0) = 0, and both atan2 partials are 0 at the origin of its arguments.
"""

import numpy as np

__all__ = [
    "Tensor", "constant", "backward", "add", "sub", "mul", "neg", "matmul",
    "relu", "sin", "cos", "exp", "atan2", "absolute", "total", "sum_along",
    "reshape", "concat", "slice_last",
]


class Tensor:
    """Graph node holding a value, its gradient, and the backward rule."""

    __slots__ = ("data", "grad", "parents", "vjp")

    def __init__(self, data, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _getitem(self, idx)


def constant(data):
    """Leaf tensor; gradients accumulate on leaves during backward."""
    return Tensor(data)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum grad down to the given shape (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def neg(a):
    a = _as_tensor(a)
    return Tensor(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.data.shape),
                             _unbroadcast(g * a.data, b.data.shape)))


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(a.data @ b.data, (a, b),
                  lambda g: (g @ b.data.T, a.data.T @ g))


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0
    # np.maximum propagates NaN so poisoned values stay detectable
    return Tensor(np.maximum(a.data, 0.0), (a,), lambda g: (g * mask,))


def sin(a):
    a = _as_tensor(a)
    return Tensor(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a):
    a = _as_tensor(a)
    return Tensor(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def exp(a):
    a = _as_tensor(a)
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,))


def atan2(y, x):
    y, x = _as_tensor(y), _as_tensor(x)
    sq = x.data * x.data + y.data * y.data
    # flat partials at the origin, where the true derivative is undefined
    safe = np.where(sq == 0.0, 1.0, sq)
    nonzero = sq != 0.0
    return Tensor(np.arctan2(y.data, x.data), (y, x),
                  lambda g: (_unbroadcast(g * np.where(nonzero, x.data / safe, 0.0), y.data.shape),
                             _unbroadcast(g * np.where(nonzero, -y.data / safe, 0.0), x.data.shape)))


def absolute(a):
    a = _as_tensor(a)
    return Tensor(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def total(a):
    """Sum of all elements (scalar tensor)."""
    a = _as_tensor(a)
    return Tensor(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.data.shape),))


def sum_along(a, axis):
    a = _as_tensor(a)
    axis = axis if isinstance(axis, tuple) else (axis,)
    axis = tuple(ax % a.data.ndim for ax in axis)

    def vjp(g):
        g_exp = np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.data.shape),)

    return Tensor(a.data.sum(axis=axis), (a,), vjp)


def reshape(a, shape):
    a = _as_tensor(a)
    return Tensor(a.data.reshape(shape), (a,),
                  lambda g: (g.reshape(a.data.shape),))


def concat(parts, axis=-1):
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts),
                  lambda g: tuple(np.split(g, splits, axis=axis)))


def slice_last(a, start, stop):
    """Slice along the last axis (columns of feature vectors)."""
    a = _as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        out[..., start:stop] = g
        return (out,)

    return Tensor(a.data[..., start:stop], (a,), vjp)


def _getitem(a, idx):
    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor(a.data[idx], (a,), vjp)


def backward(loss):
    """Populate .grad on every node reachable from the scalar loss.

    Raises if the loss is not a scalar.  Gradients are accumulated in a
    fixed reverse-topological order, so repeated runs are bit-identical.
    """
    if loss.data.ndim != 0:
        raise ValueError("backward expects a scalar loss")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))

    for node in order:
        node.grad = None
    loss.grad = np.ones(())
    for node in reversed(order):
        if node.grad is None or node.vjp is None:
            continue
        for parent, g in zip(node.parents, node.vjp(node.grad)):
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                parent.grad = parent.grad + g
