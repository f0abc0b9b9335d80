"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

A ``Tensor`` wraps a value array plus the backward-graph link needed to
propagate gradients; everything is computed in 64-bit reals. Complex data
enters the graph only after being flattened to interleaved (re, im)
features, so the core itself never sees complex dtypes.

Gradients only flow into tensors created with ``requires_grad=True`` (and
through any op that depends on one); plain data tensors are constants and
are skipped during backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """Node of the computation graph: value, gradient, and parents."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjps")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjps = ()

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # arithmetic sugar; scalars and ndarrays are wrapped as constants
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return multiply(self, as_tensor(other))

    def __rmul__(self, other):
        return multiply(as_tensor(other), self)

    def __truediv__(self, other):
        return divide(self, as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


@dataclass
class Parameter:
    """Named trainable tensor; ``init`` records the initialization scheme."""

    name: str
    tensor: Tensor
    init: str = ""

    @property
    def value(self):
        return self.tensor.value

    @property
    def grad(self):
        return self.tensor.grad


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _check_finite(value, op: str):
    if not np.all(np.isfinite(value)):
        raise ValueError(f"non-finite input to {op}")


def _make(value, inputs, vjps) -> Tensor:
    out = Tensor(value, requires_grad=any(t.requires_grad for t in inputs))
    if out.requires_grad:
        out._parents = tuple(inputs)
        out._vjps = tuple(vjps)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor):
    """Populate ``grad`` on every reachable requires-grad tensor.

    Repeated calls without resetting accumulate gradients.
    """
    if loss.value.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    if not np.isfinite(loss.value):
        raise ValueError("backward on non-finite loss")
    if not loss.requires_grad:
        return

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            node.grad = node.grad + g
        for parent, vjp in zip(node._parents, node._vjps):
            if not parent.requires_grad or vjp is None:
                continue
            contrib = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value + b.value, (a, b),
                 (lambda g: _unbroadcast(g, a.shape),
                  lambda g: _unbroadcast(g, b.shape)))


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _make(-a.value, (a,), (lambda g: -g,))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value * b.value, (a, b),
                 (lambda g: _unbroadcast(g * b.value, a.shape),
                  lambda g: _unbroadcast(g * a.value, b.shape)))


def divide(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    inv = 1.0 / b.value
    return _make(a.value * inv, (a, b),
                 (lambda g: _unbroadcast(g * inv, a.shape),
                  lambda g: _unbroadcast(-g * a.value * inv * inv, b.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """numpy matmul semantics; operands must be at least 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    value = np.matmul(a.value, b.value)

    def grad_a(g):
        return _unbroadcast(np.matmul(g, np.swapaxes(b.value, -1, -2)), a.shape)

    def grad_b(g):
        return _unbroadcast(np.matmul(np.swapaxes(a.value, -1, -2), g), b.shape)

    return _make(value, (a, b), (grad_a, grad_b))


def getitem(a: Tensor, key) -> Tensor:
    """Basic (slice/int) indexing; gradient scatters into the source shape."""
    a = as_tensor(a)
    value = a.value[key]

    def grad_a(g):
        out = np.zeros_like(a.value)
        out[key] = g
        return out

    return _make(value, (a,), (grad_a,))


def concat(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    value = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]
        return vjp

    return _make(value, tuple(parts), tuple(make_vjp(i) for i in range(len(parts))))


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.reshape(shape), (a,),
                 (lambda g: g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(a.value.transpose(axes), (a,),
                 (lambda g: g.transpose(inv),))


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def grad_a(g):
        if axis is None:
            return np.broadcast_to(g, a.shape).astype(np.float64)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g2, a.shape).astype(np.float64)

    return _make(value, (a,), (grad_a,))


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.value.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.value.shape[i] for i in axis]))
    else:
        count = a.value.shape[axis]
    return multiply(sum_(a, axis=axis, keepdims=keepdims), Tensor(1.0 / count))


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, numerically stabilized."""
    a = as_tensor(a)
    _check_finite(a.value, "softmax")
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_a(g):
        return y * (g - (g * y).sum(axis=-1, keepdims=True))

    return _make(y, (a,), (grad_a,))


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    a = as_tensor(a)
    mu = a.value.mean(axis=-1, keepdims=True)
    xc = a.value - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def grad_a(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return inv * (g - gm - y * gym)

    return _make(y, (a,), (grad_a,))


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), (a,),
                 (lambda g: g * mask,))


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    a = as_tensor(a)
    x = a.value
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    y = x * cdf

    def grad_a(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return g * (cdf + x * pdf)

    return _make(y, (a,), (grad_a,))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    x = a.value
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def grad_a(g):
        return g * y * (1.0 - y)

    return _make(y, (a,), (grad_a,))


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.value), (a,), (lambda g: g / a.value,))


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.value)
    return _make(y, (a,), (lambda g: g * y,))


def sqrt(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.value)
    return _make(y, (a,), (lambda g: g * 0.5 / y,))


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table`` by integer ids (ids are constant)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    value = table.value[ids]

    def grad_table(g):
        out = np.zeros_like(table.value)
        np.add.at(out, ids, g)
        return out

    return _make(value, (table,), (grad_table,))


def mse_loss(pred: Tensor, target) -> Tensor:
    pred = as_tensor(pred)
    t = as_tensor(target).value
    if pred.shape != t.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {t.shape}")
    diff = pred.value - t
    n = diff.size
    value = np.array((diff * diff).sum() / n)

    def grad_pred(g):
        return g * (2.0 / n) * diff

    return _make(value, (pred,), (grad_pred,))


def bce_with_logits_loss(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy in the numerically stable logits form."""
    logits = as_tensor(logits)
    t = as_tensor(targets).value
    if logits.shape != t.shape:
        raise ValueError(f"bce shape mismatch: {logits.shape} vs {t.shape}")
    x = logits.value
    per = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    n = x.size
    value = np.array(per.sum() / n)

    def grad_logits(g):
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return g * (s - t) / n

    return _make(value, (logits,), (grad_logits,))
