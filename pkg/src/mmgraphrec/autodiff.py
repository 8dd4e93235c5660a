"""Minimal reverse-mode differentiation over numpy arrays.

The model's computation graph is static and built from a small, fixed
operator vocabulary (affine maps, sparse products, gathers, softmax,
softplus, reductions), so a lightweight tape is all that is needed.

Every primitive accepts either plain ndarrays or :class:`Variable` nodes.
With plain arrays it just computes and returns an ndarray; as soon as one
input is a Variable the result is a Variable that remembers how to push
gradients back to its parents. This lets the same model code serve both
the inference path (pure numpy) and the training path (differentiable).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class Variable:
    """Array node on the differentiation tape.

    ``grad`` is ``None`` until :func:`backward` reaches the node (parameter
    leaves are usually pre-seeded with a zero buffer by their owner).
    """

    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, _parents=(), _vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Variable(shape={self.value.shape}, leaf={self._vjp is None})"


def value_of(x):
    """Underlying ndarray of ``x`` whether or not it is a Variable."""
    if isinstance(x, Variable):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` to undo numpy broadcasting."""
    grad = np.asarray(grad, dtype=np.float64)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(out, inputs, grad_fns):
    """Build a Variable if any input is one, else return the raw array.

    ``grad_fns`` maps each input position to ``g -> gradient`` (or None
    for non-differentiable arguments such as index arrays).
    """
    parents = []
    vjps = []
    for x, fn in zip(inputs, grad_fns):
        if isinstance(x, Variable) and fn is not None:
            parents.append(x)
            vjps.append(fn)
    if not parents:
        return out

    def vjp(g):
        return [fn(g) for fn in vjps]

    return Variable(out, tuple(parents), vjp)


# ---------------------------------------------------------------------------
# arithmetic

def add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    return _result(out, (a, b), (
        lambda g: _unbroadcast(g, av.shape),
        lambda g: _unbroadcast(g, bv.shape),
    ))


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    return _result(out, (a, b), (
        lambda g: _unbroadcast(g, av.shape),
        lambda g: _unbroadcast(-g, bv.shape),
    ))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    return _result(out, (a, b), (
        lambda g: _unbroadcast(g * bv, av.shape),
        lambda g: _unbroadcast(g * av, bv.shape),
    ))


def matmul(a, b):
    """Matrix product; supports stacked (batched) operands like np.matmul."""
    av, bv = value_of(a), value_of(b)
    out = np.matmul(av, bv)
    return _result(out, (a, b), (
        lambda g: _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape),
        lambda g: _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape),
    ))


def sparse_matmul(sp_matrix, x):
    """Product of a constant scipy sparse matrix with a dense operand."""
    xv = value_of(x)
    if sp_matrix.shape[1] != xv.shape[0]:
        raise ValueError(
            f"sparse_matmul dimension mismatch: {sp_matrix.shape} @ {xv.shape}"
        )
    out = sp_matrix @ xv
    sp_t = sp_matrix.T
    return _result(out, (x,), (lambda g: sp_t @ np.asarray(g),))


def swap_last(a):
    """Transpose the last two axes."""
    av = value_of(a)
    out = np.swapaxes(av, -1, -2)
    return _result(out, (a,), (lambda g: np.swapaxes(g, -1, -2),))


def reshape(a, shape):
    av = value_of(a)
    out = av.reshape(shape)
    return _result(out, (a,), (lambda g: np.asarray(g).reshape(av.shape),))


# ---------------------------------------------------------------------------
# indexing

def gather_rows(x, idx):
    """``x[idx]`` for an integer index array; scatter-adds on the way back."""
    xv = value_of(x)
    idx = np.asarray(idx)

    def grad_x(g):
        gx = np.zeros_like(xv)
        np.add.at(gx, idx, g)
        return gx

    return _result(xv[idx], (x, idx), (grad_x, None))


def sliced(x, key):
    """Basic (non-fancy) slicing ``x[key]``."""
    xv = value_of(x)

    def grad_x(g):
        gx = np.zeros_like(xv)
        gx[key] = g
        return gx

    return _result(xv[key], (x,), (grad_x,))


def concat(parts, axis=0):
    values = [value_of(p) for p in parts]
    out = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def make_grad(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(offsets[i], offsets[i + 1])
        sl = tuple(sl)
        return lambda g: np.asarray(g)[sl]

    return _result(out, tuple(parts), tuple(make_grad(i) for i in range(len(parts))))


# ---------------------------------------------------------------------------
# nonlinearities and reductions

def softmax_last(x):
    """Row-wise softmax along the last axis (numerically stable)."""
    xv = value_of(x)
    shifted = xv - xv.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def grad_x(g):
        return p * (g - (g * p).sum(axis=-1, keepdims=True))

    return _result(p, (x,), (grad_x,))


def logsumexp_last(x):
    """log(sum(exp(x))) along the last axis; output drops that axis."""
    xv = value_of(x)
    m = xv.max(axis=-1, keepdims=True)
    e = np.exp(xv - m)
    s = e.sum(axis=-1, keepdims=True)
    out = (m + np.log(s))[..., 0]

    def grad_x(g):
        return np.asarray(g)[..., None] * (e / s)

    return _result(out, (x,), (grad_x,))


def softplus(x):
    """log(1 + exp(x)) computed without overflow."""
    xv = value_of(x)
    out = np.logaddexp(0.0, xv)
    return _result(out, (x,), (lambda g: g * expit(xv),))


def tanh(x):
    xv = value_of(x)
    out = np.tanh(xv)
    return _result(out, (x,), (lambda g: g * (1.0 - out * out),))


def sum_op(x, axis=None, keepdims=False):
    xv = value_of(x)
    out = xv.sum(axis=axis, keepdims=keepdims)

    def grad_x(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, xv.shape).copy()

    return _result(out, (x,), (grad_x,))


def mean_all(x):
    xv = value_of(x)
    return mul(sum_op(x), 1.0 / xv.size)


# ---------------------------------------------------------------------------
# backward pass

def backward(root):
    """Accumulate d(root)/d(leaf) into ``.grad`` of every upstream Variable.

    ``root`` must be a scalar Variable. Gradients are accumulated (existing
    buffers are added to, not replaced), matching the usual step discipline
    of zeroing parameter gradients before each batch.
    """
    if not isinstance(root, Variable):
        raise TypeError("backward() needs a recorded Variable, got "
                        f"{type(root).__name__}")
    if root.value.ndim != 0:
        raise ValueError("backward() expects a scalar root, got shape "
                         f"{root.value.shape}")

    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    root.grad = np.asarray(1.0) if root.grad is None else root.grad + 1.0
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(node.grad)):
            pg = np.asarray(pg, dtype=np.float64)
            if parent.grad is None:
                parent.grad = pg.reshape(parent.value.shape).copy()
            else:
                parent.grad = parent.grad + pg.reshape(parent.value.shape)
