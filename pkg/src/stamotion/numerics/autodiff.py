"""Tape-free reverse-mode differentiation over numpy arrays.

Only the operations the motion pipeline needs are provided. Every op
returns a new :class:`Tensor` that remembers its parents and a closure
that pushes the output gradient back to them.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self):
        return transpose(self)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{label})"

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Backpropagate from this node; ``grad`` defaults to ones (scalar loss)."""
        if grad is None:
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

        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ---------------------------------------------------
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __pow__(self, p):
        return power(self, p)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))


def _lift(a, b):
    """Wrap constants so they match the dtype of the tensor operand."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    return a, b


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise arithmetic -----------------------------------------------

def add(a, b):
    a, b = _lift(a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(a.data + b.data, _parents=(a, b), _backward=back)


def sub(a, b):
    a, b = _lift(a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor(a.data - b.data, _parents=(a, b), _backward=back)


def mul(a, b):
    a, b = _lift(a, b)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(a.data * b.data, _parents=(a, b), _backward=back)


def div(a, b):
    a, b = _lift(a, b)
    out = a.data / b.data

    def back(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * out / b.data, b.shape)
        return ga, gb

    return Tensor(out, _parents=(a, b), _backward=back)


def power(a, p: float):
    out = a.data ** p

    def back(g):
        return (g * p * a.data ** (p - 1),)

    return Tensor(out, _parents=(a,), _backward=back)


def exp(a):
    out = np.exp(a.data)
    return Tensor(out, _parents=(a,), _backward=lambda g: (g * out,))


def sqrt(a):
    out = np.sqrt(a.data)
    return Tensor(out, _parents=(a,), _backward=lambda g: (g * 0.5 / out,))


def sin(a):
    return Tensor(np.sin(a.data), _parents=(a,), _backward=lambda g: (g * np.cos(a.data),))


def cos(a):
    return Tensor(np.cos(a.data), _parents=(a,), _backward=lambda g: (-g * np.sin(a.data),))


def tanh(a):
    out = np.tanh(a.data)
    return Tensor(out, _parents=(a,), _backward=lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return Tensor(out, _parents=(a,), _backward=lambda g: (g * out * (1.0 - out),))


def clip_min(a, lo: float):
    """max(a, lo); gradient flows only where the bound is inactive."""
    keep = a.data > lo
    return Tensor(np.where(keep, a.data, lo).astype(a.data.dtype),
                  _parents=(a,), _backward=lambda g: (g * keep,))


def clip(a, lo: float, hi: float):
    keep = (a.data >= lo) & (a.data <= hi)
    return Tensor(np.clip(a.data, lo, hi), _parents=(a,), _backward=lambda g: (g * keep,))


def where(cond, a, b):
    a, b = _lift(a, b)
    cond = np.asarray(cond, dtype=bool)

    def back(g):
        return (_unbroadcast(np.where(cond, g, 0), a.shape),
                _unbroadcast(np.where(cond, 0, g), b.shape))

    return Tensor(np.where(cond, a.data, b.data), _parents=(a, b), _backward=back)


# -- reductions and shape ops -----------------------------------------------

def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return Tensor(np.asarray(out), _parents=(a,), _backward=back)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    return Tensor(a.data.reshape(shape), _parents=(a,), _backward=lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return Tensor(a.data.transpose(axes), _parents=(a,),
                  _backward=lambda g: (g.transpose(inv),))


def swap_last(a):
    """Swap the last two axes (batched matrix transpose)."""
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def _is_basic(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)


def getitem(a, idx):
    basic = _is_basic(idx)

    def back(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return Tensor(a.data[idx], _parents=(a,), _backward=back)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                  _parents=tuple(tensors), _backward=back)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor(np.stack([t.data for t in tensors], axis=axis),
                  _parents=tuple(tensors), _backward=back)


# -- linear algebra ---------------------------------------------------------

def matmul(a, b):
    a, b = _lift(a, b)

    def back(g):
        if b.ndim == 1:
            ga = np.multiply.outer(g, b.data)
            gb = np.tensordot(a.data, g, axes=(tuple(range(a.ndim - 1)), tuple(range(g.ndim))))
            return ga, gb
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor(a.data @ b.data, _parents=(a, b), _backward=back)


def affine(x, weight, bias):
    """x @ weight + bias over the last axis, for inputs of any leading rank."""
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    if bias is not None:
        out = out + bias.data

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ weight.data.T).reshape(x.shape)
        gw = x2.T @ g2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor(out.reshape(lead + (weight.shape[1],)), _parents=parents, _backward=back)


def softmax(a, axis=-1):
    """Softmax with max subtraction; Jacobian-vector product in closed form.

    The normalizer sums the exponentials in sorted order, so permuting the
    entries along ``axis`` permutes the output bit-for-bit.
    """
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.sort(e, axis=axis).sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor(out, _parents=(a,), _backward=back)


def cross(a, b):
    """Cross product over the last axis (length 3)."""
    a, b = _lift(a, b)

    def back(g):
        return (_unbroadcast(np.cross(b.data, g), a.shape),
                _unbroadcast(np.cross(g, a.data), b.shape))

    return Tensor(np.cross(a.data, b.data), _parents=(a, b), _backward=back)


def norm(a, axis=-1, keepdims=False, eps=0.0):
    """Euclidean norm; ``eps`` is added under the root to keep the gradient finite at zero."""
    return sqrt(tsum(a * a, axis=axis, keepdims=keepdims) + eps)


def safe_norm(a, axis=-1, keepdims=False):
    """Euclidean norm whose gradient at the zero vector is taken as zero."""
    out = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=keepdims))

    def back(g):
        n = out if keepdims else np.expand_dims(out, axis)
        gg = g if keepdims else np.expand_dims(g, axis)
        safe = np.where(n > 0, n, 1.0)
        return (np.where(n > 0, gg * a.data / safe, 0.0).astype(a.data.dtype),)

    return Tensor(out, _parents=(a,), _backward=back)
