"""Small reverse-mode autodiff over float64 numpy arrays.

Only the operations the rest of the package needs are provided. Every op
records its parents and a closure that pushes the output gradient back to
them; ``Tensor.backward`` walks the graph in reverse topological order.
"""
from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() on a non-scalar needs an explicit gradient")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise NotImplementedError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return tsum(self, axis, keepdims) * (1.0 / n)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    return _make(x.data + y.data, (x, y),
                 lambda g: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape)))


def neg(x: Tensor) -> Tensor:
    return _make(-x.data, (x,), lambda g: (-g,))


def mul(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    return _make(x.data * y.data, (x, y),
                 lambda g: (_unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)))


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """``x @ w`` for 2-d operands (rows of x are samples)."""
    x, w = as_tensor(x), as_tensor(w)
    return _make(x.data @ w.data, (x, w), lambda g: (g @ w.data.T, x.data.T @ g))


def spmm(a, x: Tensor) -> Tensor:
    """Constant (scipy sparse or dense) matrix times tensor."""
    return _make(a @ x.data, (x,), lambda g: (np.asarray(a.T @ g),))


def relu(x: Tensor) -> Tensor:
    on = x.data > 0
    return _make(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def hinge(x: Tensor) -> Tensor:
    """max(x, 0) with zero gradient on the flat side."""
    return relu(x)


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), back)


def sorted_colsum(x: Tensor) -> Tensor:
    """Column sums of a 2-d tensor, independent of row order bit for bit.

    Each column is sorted before summation so any permutation of the rows
    gives the identical float result.
    """
    out = np.sort(x.data, axis=0).sum(axis=0)
    return _make(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def getitem(x: Tensor, index) -> Tensor:
    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(x.data[index], (x,), back)


def take(x: Tensor, idx: np.ndarray, axis: int) -> Tensor:
    """Gather along one axis with an integer index array (repeats allowed)."""
    axis = axis % x.ndim
    out = np.take(x.data, idx, axis=axis)

    def back(g):
        full = np.zeros_like(x.data)
        # move gathered axes to the front so np.add.at can scatter them
        gm = np.moveaxis(g, list(range(axis, axis + idx.ndim)), list(range(idx.ndim)))
        fm = np.moveaxis(full, axis, 0)
        np.add.at(fm, idx, gm)
        return (full,)

    return _make(out, (x,), back)


def concat(xs, axis=0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    out = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([0] + [x.shape[axis] for x in xs])

    def back(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(xs)))

    return _make(out, xs, back)


def stack(xs, axis=-1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    out = np.stack([x.data for x in xs], axis=axis)

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _make(out, xs, back)


def _masked(x: np.ndarray, mask, fill):
    return x if mask is None else np.where(mask, x, fill)


def logsumexp(x: Tensor, axis=-1, mask=None) -> Tensor:
    """log sum exp over ``axis``; entries with ``mask == False`` are excluded.

    Every reduced slice must keep at least one unmasked entry.
    """
    v = _masked(x.data, mask, -np.inf)
    m = np.max(v, axis=axis, keepdims=True)
    e = np.exp(v - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)

    def back(g):
        return (np.expand_dims(g, axis) * (e / s),)

    return _make(out, (x,), back)


def softmax_reduce(x: Tensor, beta: float, axis=-1, mask=None) -> Tensor:
    return logsumexp(x * beta, axis=axis, mask=mask) * (1.0 / beta)


def softmin_reduce(x: Tensor, beta: float, axis=-1, mask=None) -> Tensor:
    return -logsumexp(x * (-beta), axis=axis, mask=mask) * (1.0 / beta)


def logcumsumexp(x: Tensor, axis=-1, mask=None) -> Tensor:
    """Running log-sum-exp along ``axis``; masked entries contribute nothing.

    The first entry along ``axis`` must be unmasked.
    """
    v = np.moveaxis(_masked(x.data, mask, -np.inf), axis, -1)
    out = np.empty_like(v)
    out[..., 0] = v[..., 0]
    for k in range(1, v.shape[-1]):
        out[..., k] = np.logaddexp(out[..., k - 1], v[..., k])

    def back(g):
        gm = np.moveaxis(g, axis, -1)
        # d out_k / d v_j = exp(v_j - out_k) for j <= k
        w = np.exp(v[..., :, None] - out[..., None, :])
        w = np.triu(w) if w.ndim == 2 else w * np.triu(np.ones(w.shape[-2:]))
        grad = np.einsum("...jk,...k->...j", w, gm)
        return (np.moveaxis(grad, -1, axis),)

    return _make(np.moveaxis(out, -1, axis), (x,), back)


def amax(x: Tensor, axis=-1, mask=None) -> Tensor:
    """Hard max; the subgradient goes to the first maximising entry."""
    v = _masked(x.data, mask, -np.inf)
    arg = np.argmax(v, axis=axis)
    out = np.take_along_axis(v, np.expand_dims(arg, axis), axis).squeeze(axis)

    def back(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis)
        return (full,)

    return _make(out, (x,), back)


def amin(x: Tensor, axis=-1, mask=None) -> Tensor:
    return -amax(-x, axis=axis, mask=mask)


def norm(x: Tensor, axis=-1) -> Tensor:
    """Euclidean norm along ``axis``; gradient taken as 0 at the origin."""
    out = np.sqrt(np.sum(x.data * x.data, axis=axis))

    def back(g):
        safe = np.where(out > 0, out, 1.0)
        scale = np.where(out > 0, g / safe, 0.0)
        return (x.data * np.expand_dims(scale, axis),)

    return _make(out, (x,), back)


def infnorm(x: Tensor, axis=-1) -> Tensor:
    """Max-abs along ``axis``; subgradient on the first maximising coordinate."""
    a = np.abs(x.data)
    arg = np.argmax(a, axis=axis)
    out = np.max(a, axis=axis)

    def back(g):
        full = np.zeros_like(x.data)
        sel = np.expand_dims(arg, axis)
        sign = np.sign(np.take_along_axis(x.data, sel, axis))
        np.put_along_axis(full, sel, np.expand_dims(g, axis) * sign, axis)
        return (full,)

    return _make(out, (x,), back)


def mse(pred: Tensor, target) -> Tensor:
    diff = pred - as_tensor(target)
    return square(diff).mean()
