"""Reverse-mode automatic differentiation over dense float64 arrays.

The tape records whole-array operations (matmul, broadcast add, masked
softmax, ...) rather than scalars. Leaves created with ``parameter`` carry
gradients; everything else is treated as a constant and skipped during the
backward sweep. Arrays may have leading batch dimensions; every op
broadcasts the way numpy does and sums gradients back to the leaf shape.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInput, NumericalFailure

_EXP_CLIP = 700.0  # exp overflow guard for float64


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum a broadcasted gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _node(value, parents, backward):
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(value)
    return Tensor(value, requires_grad=True, parents=tuple(parents), backward=backward)


def backward(root, seed=None):
    """Backpropagate from ``root``, visiting each tape node exactly once in
    reverse topological order."""
    if not root.requires_grad:
        return
    order = []
    visited = set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise and broadcasting ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_val = a.value + b.value

    def back(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(g, b.value.shape))

    return _node(out_val, (a, b), back)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_val = a.value - b.value

    def back(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(-g, b.value.shape))

    return _node(out_val, (a, b), back)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_val = a.value * b.value

    def back(g):
        _accumulate(a, _unbroadcast(g * b.value, a.value.shape))
        _accumulate(b, _unbroadcast(g * a.value, b.value.shape))

    return _node(out_val, (a, b), back)


def neg(a):
    a = as_tensor(a)

    def back(g):
        _accumulate(a, -g)

    return _node(-a.value, (a,), back)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise InvalidInput("matmul expects arrays with at least 2 dimensions")
    out_val = a.value @ b.value

    def back(g):
        _accumulate(a, _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.value.shape))
        _accumulate(b, _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.value.shape))

    return _node(out_val, (a, b), back)


def transpose(a, axes=None):
    a = as_tensor(a)
    out_val = np.transpose(a.value, axes)
    inv = None if axes is None else np.argsort(axes)

    def back(g):
        _accumulate(a, np.transpose(g, inv))

    return _node(out_val, (a,), back)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.value.shape

    def back(g):
        _accumulate(a, g.reshape(old))

    return _node(a.value.reshape(shape), (a,), back)


def concat(parts, axis):
    parts = [as_tensor(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    out_val = np.concatenate([p.value for p in parts], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(idx)])

    return _node(out_val, tuple(parts), back)


def slice_axis(a, axis, start, stop):
    a = as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def back(g):
        full = np.zeros_like(a.value)
        full[idx] = g
        _accumulate(a, full)

    return _node(a.value[idx], (a,), back)


def gather_rows(a, index):
    """Select rows ``a[index]``; the gradient scatter-adds duplicates."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)
        _accumulate(a, full)

    return _node(a.value[index], (a,), back)


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_val = a.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.value.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.value.shape).copy())

    return _node(out_val, (a,), back)


def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    pos = a.value > 0
    out_val = np.where(pos, a.value, slope * a.value)

    def back(g):
        _accumulate(a, g * np.where(pos, 1.0, slope))

    return _node(out_val, (a,), back)


def relu(a):
    return leaky_relu(a, slope=0.0)


def elu(a):
    a = as_tensor(a)
    pos = a.value > 0
    expm1 = np.expm1(np.minimum(a.value, 0.0))
    out_val = np.where(pos, a.value, expm1)

    def back(g):
        _accumulate(a, g * np.where(pos, 1.0, expm1 + 1.0))

    return _node(out_val, (a,), back)


def sigmoid(a):
    a = as_tensor(a)
    out_val = _sigmoid(a.value)

    def back(g):
        _accumulate(a, g * out_val * (1.0 - out_val))

    return _node(out_val, (a,), back)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def rsqrt(a):
    a = as_tensor(a)
    if np.any(a.value <= 0):
        raise InvalidInput("rsqrt requires strictly positive entries")
    out_val = 1.0 / np.sqrt(a.value)

    def back(g):
        _accumulate(a, g * (-0.5) * out_val / a.value)

    return _node(out_val, (a,), back)


# ---------------------------------------------------------------------------
# structured ops


def masked_softmax(a, mask, axis=-1):
    """Softmax along ``axis`` over the entries where ``mask`` is true.

    Fully-masked slices come out as all zeros (no probability mass), which is
    how attention treats nodes without in-neighbors.
    """
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.value.shape)
    neg = np.where(mask, a.value, -np.inf)
    mx = neg.max(axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.where(mask, np.exp(np.minimum(a.value - mx, _EXP_CLIP)), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    out_val = e / np.where(s > 0.0, s, 1.0)

    def back(g):
        inner = (g * out_val).sum(axis=axis, keepdims=True)
        _accumulate(a, out_val * (g - inner))

    return _node(out_val, (a,), back)


def row_normalize(a):
    """Divide each row by its sum; all-zero rows pass through unchanged.

    Meant for nonnegative matrices where a zero row sum implies a zero row.
    """
    a = as_tensor(a)
    s = a.value.sum(axis=-1, keepdims=True)
    safe = np.where(s > 0.0, s, 1.0)
    out_val = a.value / safe

    def back(g):
        inner = (g * out_val).sum(axis=-1, keepdims=True)
        _accumulate(a, np.where(s > 0.0, (g - inner) / safe, g))

    return _node(out_val, (a,), back)


def linear_combination(w, mats):
    """Weighted sum ``sum_t w[t] * mats[t]`` of constant matrices.

    ``w`` is a length-T tensor; only it receives gradients.
    """
    w = as_tensor(w)
    mats = np.asarray(mats, dtype=np.float64)
    if w.value.ndim != 1 or mats.shape[0] != w.value.shape[0]:
        raise InvalidInput("weights must be 1-d and match the matrix count")
    out_val = np.tensordot(w.value, mats, axes=1)

    def back(g):
        _accumulate(w, np.tensordot(mats, g, axes=((1, 2), (0, 1))))

    return _node(out_val, (w,), back)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of row-softmax(logits) against integer labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    n, c = logits.value.shape
    if labels.shape != (n,):
        raise InvalidInput("labels must be one id per logit row")
    if np.any(labels < 0) or np.any(labels >= c):
        raise InvalidInput("label id outside [0, C)")
    mx = logits.value.max(axis=1, keepdims=True)
    shifted = logits.value - mx
    lse = np.log(np.exp(shifted).sum(axis=1)) + mx[:, 0]
    losses = lse - logits.value[np.arange(n), labels]
    out_val = np.array(losses.mean())

    def back(g):
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        _accumulate(logits, (float(g) / n) * p)

    return _node(out_val, (logits,), back)


def logistic_cross_entropy(scores, labels):
    """Mean binary cross-entropy of sigmoid(scores) against 0/1 labels."""
    scores = as_tensor(scores)
    labels = np.asarray(labels, dtype=np.float64)
    s = scores.value.reshape(-1)
    if labels.shape != s.shape:
        raise InvalidInput("labels must match the score count")
    losses = np.maximum(s, 0.0) - s * labels + np.log1p(np.exp(-np.abs(s)))
    out_val = np.array(losses.mean())

    def back(g):
        d = (_sigmoid(s) - labels) * (float(g) / s.size)
        _accumulate(scores, d.reshape(scores.value.shape))

    return _node(out_val, (scores,), back)


# ---------------------------------------------------------------------------
# verification


def grad_check(fn, params, h=1e-5):
    """Max relative error between tape gradients and central differences.

    ``fn`` takes no arguments, reads the given parameter tensors, and returns
    a scalar tensor; it is re-run with each coordinate of each parameter
    nudged by ±h. Relative error is |analytic - numeric| / max(1, |analytic|).
    """
    if h <= 0:
        raise InvalidInput("h must be positive")
    for p in params:
        p.zero_grad()
    out = fn()
    if out.value.size != 1:
        raise InvalidInput("grad_check needs a scalar-valued function")
    if not np.isfinite(out.value):
        raise NumericalFailure("function value is not finite")
    backward(out)
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            f_plus = float(fn().value)
            flat[i] = keep - h
            f_minus = float(fn().value)
            flat[i] = keep
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericalFailure("perturbed function value is not finite")
            numeric = (f_plus - f_minus) / (2.0 * h)
            rel = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
            worst = max(worst, rel)
    return worst
