"""Reverse-mode automatic differentiation on numpy arrays.

A small tape-based engine: every op builds a node holding its inputs and a
vector-Jacobian-product callback.  ``Tensor.backward()`` walks the graph in
reverse topological order and accumulates gradients into the leaf tensors.

All module-level functions (``sin``, ``matmul``, ``where``, ...) dispatch on
type: given plain ndarrays they fall through to numpy, given at least one
``Tensor`` they record the operation.  Code written against these functions
therefore runs identically on raw arrays (no tape, fast) and on tracked
parameters.

Everything is float64.  Gradient-bearing leaves are created with
``Tensor(data, requires_grad=True)``; repeated ``backward()`` calls accumulate
into ``.grad`` (zero with ``zero_grad``).
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    # make numpy defer to our dunders instead of building object arrays
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``.

        `grad` seeds the output cotangent; defaults to ones (scalar losses).
        """
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ValueError(f"seed shape {grad.shape} != tensor shape {self.data.shape}")

        topo: list[Tensor] = []
        visited = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ----------------------------------------------------

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def _node(data: np.ndarray, parents: tuple, vjp) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def value(x) -> np.ndarray:
    """Underlying ndarray of a Tensor, or the input itself."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- arithmetic -------------------------------------------------------------


def add(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.add(a, b)
    a, b = _coerce(a), _coerce(b)
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.subtract(a, b)
    a, b = _coerce(a), _coerce(b)
    return _node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.multiply(a, b)
    a, b = _coerce(a), _coerce(b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.divide(a, b)
    a, b = _coerce(a), _coerce(b)
    inv = 1.0 / b.data
    return _node(
        a.data * inv,
        (a, b),
        lambda g: (
            _unbroadcast(g * inv, a.data.shape),
            _unbroadcast(-g * a.data * inv * inv, b.data.shape),
        ),
    )


def power(x, p: float):
    if not isinstance(x, Tensor):
        return np.power(x, p)
    out = np.power(x.data, p)
    return _node(out, (x,), lambda g: (g * p * np.power(x.data, p - 1.0),))


def matmul(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.matmul(a, b)
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul supports >=2-d operands only")

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return ga, gb

    return _node(np.matmul(a.data, b.data), (a, b), vjp)


# -- elementwise nonlinearities ---------------------------------------------


def exp(x):
    if not isinstance(x, Tensor):
        return np.exp(x)
    out = np.exp(x.data)
    return _node(out, (x,), lambda g: (g * out,))


def log(x):
    if not isinstance(x, Tensor):
        return np.log(x)
    return _node(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x):
    if not isinstance(x, Tensor):
        return np.sqrt(x)
    out = np.sqrt(x.data)
    return _node(out, (x,), lambda g: (g * 0.5 / out,))


def sin(x):
    if not isinstance(x, Tensor):
        return np.sin(x)
    return _node(np.sin(x.data), (x,), lambda g: (g * np.cos(x.data),))


def cos(x):
    if not isinstance(x, Tensor):
        return np.cos(x)
    return _node(np.cos(x.data), (x,), lambda g: (-g * np.sin(x.data),))


def tanh(x):
    if not isinstance(x, Tensor):
        return np.tanh(x)
    out = np.tanh(x.data)
    return _node(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x):
    if not isinstance(x, Tensor):
        return 1.0 / (1.0 + np.exp(-x))
    out = 1.0 / (1.0 + np.exp(-x.data))
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


def _softplus(x):
    # max(x,0) + log1p(e^-|x|) == log(1+e^x); much faster than logaddexp
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus(x):
    """log(1 + e^x), evaluated stably; derivative is the logistic sigmoid."""
    if not isinstance(x, Tensor):
        return _softplus(x)
    out = _softplus(x.data)
    return _node(out, (x,), lambda g: (g / (1.0 + np.exp(-x.data)),))


def absolute(x):
    if not isinstance(x, Tensor):
        return np.abs(x)
    return _node(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def relu(x):
    if not isinstance(x, Tensor):
        return np.maximum(x, 0.0)
    mask = x.data > 0.0
    return _node(x.data * mask, (x,), lambda g: (g * mask,))


def maximum(a, b):
    """Elementwise max; on ties the gradient goes to the first argument."""
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.maximum(a, b)
    a, b = _coerce(a), _coerce(b)
    take_a = a.data >= b.data
    return _node(
        np.where(take_a, a.data, b.data),
        (a, b),
        lambda g: (
            _unbroadcast(g * take_a, a.data.shape),
            _unbroadcast(g * (~take_a), b.data.shape),
        ),
    )


def minimum(a, b):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.minimum(a, b)
    a, b = _coerce(a), _coerce(b)
    take_a = a.data <= b.data
    return _node(
        np.where(take_a, a.data, b.data),
        (a, b),
        lambda g: (
            _unbroadcast(g * take_a, a.data.shape),
            _unbroadcast(g * (~take_a), b.data.shape),
        ),
    )


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


def arccos_safe(x, eps: float = 1e-12):
    """arccos with the argument clipped to [-1, 1] and a bounded derivative.

    The value is exact (``arccos(clip(x))``); the gradient uses
    ``-1/sqrt(max(1 - x^2, eps))`` so it stays finite at the endpoints, where
    floating-point traces of rotation matrices routinely land.
    """
    if not isinstance(x, Tensor):
        return np.arccos(np.clip(x, -1.0, 1.0))
    xc = np.clip(x.data, -1.0, 1.0)
    denom = np.sqrt(np.maximum(1.0 - xc * xc, eps))
    return _node(np.arccos(xc), (x,), lambda g: (-g / denom,))


def where(cond, a, b):
    """Branch select; `cond` is a plain boolean array (not differentiated)."""
    cond = np.asarray(cond, dtype=bool)
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.where(cond, a, b)
    a, b = _coerce(a), _coerce(b)
    return _node(
        np.where(cond, a.data, b.data),
        (a, b),
        lambda g: (
            _unbroadcast(g * cond, a.data.shape),
            _unbroadcast(g * (~cond), b.data.shape),
        ),
    )


# -- reductions and shape ----------------------------------------------------


def sum_(x, axis=None, keepdims=False):
    if not isinstance(x, Tensor):
        return np.sum(x, axis=axis, keepdims=keepdims)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape).copy(),)

    return _node(out, (x,), vjp)


def mean(x, axis=None, keepdims=False):
    if not isinstance(x, Tensor):
        return np.mean(x, axis=axis, keepdims=keepdims)
    n = x.data.size if axis is None else x.data.shape[axis]
    return sum_(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def cumsum(x, axis: int):
    if not isinstance(x, Tensor):
        return np.cumsum(x, axis=axis)
    return _node(
        np.cumsum(x.data, axis=axis),
        (x,),
        lambda g: (np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis),),
    )


def norm(x, axis=-1, keepdims=False, eps: float = 1e-12):
    """Euclidean norm along `axis` with an exact value and a guarded gradient.

    The forward value is the true norm (0 at the origin); the backward pass
    divides by ``max(norm, eps)`` so zero-residual terms contribute zero
    gradient instead of NaN.
    """
    if not isinstance(x, Tensor):
        return np.linalg.norm(x, axis=axis, keepdims=keepdims)
    n = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))
    out = n if keepdims else np.squeeze(n, axis=axis)

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (gg * x.data / np.maximum(n, eps),)

    return _node(out, (x,), vjp)


def reshape(x, shape):
    if not isinstance(x, Tensor):
        return np.reshape(x, shape)
    old = x.data.shape
    return _node(np.reshape(x.data, shape), (x,), lambda g: (np.reshape(g, old),))


def swapaxes(x, a: int, b: int):
    if not isinstance(x, Tensor):
        return np.swapaxes(x, a, b)
    return _node(np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),))


def expand_dims(x, axis: int):
    if not isinstance(x, Tensor):
        return np.expand_dims(x, axis)
    return _node(np.expand_dims(x.data, axis), (x,), lambda g: (np.squeeze(g, axis=axis),))


def getitem(x, idx):
    if not isinstance(x, Tensor):
        return np.asarray(x)[idx]
    out = x.data[idx]

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(np.array(out, copy=True), (x,), vjp)


def take(x, indices, axis: int = 0):
    """Gather rows along `axis`; backward scatter-adds (indices may repeat)."""
    indices = np.asarray(indices)
    if not isinstance(x, Tensor):
        return np.take(x, indices, axis=axis)
    if axis != 0:
        return swapaxes(take(swapaxes(x, 0, axis), indices, axis=0), 0, axis)
    return getitem(x, indices)


def concatenate(parts, axis: int = 0):
    if not any(isinstance(p, Tensor) for p in parts):
        return np.concatenate(parts, axis=axis)
    parts = [_coerce(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes[:-1])

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), vjp)


def stack(parts, axis: int = 0):
    if not any(isinstance(p, Tensor) for p in parts):
        return np.stack(parts, axis=axis)
    parts = [_coerce(p) for p in parts]

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _node(np.stack([p.data for p in parts], axis=axis), tuple(parts), vjp)


def softmax(x, axis: int = -1):
    if not isinstance(x, Tensor):
        z = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(z)
        return e / np.sum(e, axis=axis, keepdims=True)
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (x,), vjp)


def _cross3(a, b):
    # same formula np.cross applies, minus its axis/2-vector machinery
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2,
                     a0 * b1 - a1 * b0], axis=-1)


def cross(a, b):
    """3-vector cross product along the last axis."""
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return _cross3(np.asarray(a), np.asarray(b))
    a, b = _coerce(a), _coerce(b)

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(_cross3(b.data, g), a.data.shape)
        if b.requires_grad:
            gb = _unbroadcast(_cross3(g, a.data), b.data.shape)
        return ga, gb

    return _node(_cross3(a.data, b.data), (a, b), vjp)
