"""Dense arrays with reverse-mode autodiff.

A Tensor wraps a numpy array plus an optional backward closure; ops build
the compute graph eagerly and backward() replays it in reverse topological
order. Only the operations the token-grid transformer needs are implemented
(no general broadcasting). Matrix products use BLAS; fused reductions go
through the selected kernel backend.
"""

from __future__ import annotations

import contextlib

import numpy as np

from npplab import backend


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    def __init__(self, data, dtype=np.float32, requires_grad=False):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._prev = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def backward(self):
        backward(self)

    # sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / scalar)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self):
        return tsum(self)


def _node(data, parents, backward_fn):
    """Wrap an op result; drops graph bookkeeping when grads are off."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._prev = ()
        out._backward = None
    return out


def _accum(t, g):
    if t.requires_grad:
        if t.grad is None:
            t.grad = g
        else:
            t.grad = t.grad + g


def backward(loss):
    """Populate .grad on every requires_grad tensor reachable from loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo = []
    visited = {id(loss)}
    stack = [(loss, iter(loss._prev))]
    while stack:
        node, children = stack[-1]
        advanced = False
        for child in children:
            if id(child) in visited or not child.requires_grad:
                continue
            visited.add(id(child))
            stack.append((child, iter(child._prev)))
            advanced = True
            break
        if not advanced:
            topo.append(node)
            stack.pop()
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------- primitives


def add(a, b):
    if not isinstance(b, Tensor):
        out_data = a.data + a.dtype.type(b)

        def back_scalar(dout):
            _accum(a, dout)

        return _node(out_data, (a,), back_scalar)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")

    def back(dout):
        _accum(a, dout)
        _accum(b, dout)

    return _node(a.data + b.data, (a, b), back)


def mul(a, b):
    if not isinstance(b, Tensor):
        s = a.dtype.type(b)

        def back_scalar(dout):
            _accum(a, dout * s)

        return _node(a.data * s, (a,), back_scalar)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")

    def back(dout):
        _accum(a, dout * b.data)
        _accum(b, dout * a.data)

    return _node(a.data * b.data, (a, b), back)


def matmul(a, b):
    an, bn = a.data.ndim, b.data.ndim
    if an < 2 or bn < 2:
        raise ShapeError("matmul operands must have ndim >= 2")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dims disagree: {a.data.shape} @ {b.data.shape}"
        )
    if bn == 2:
        # shared right operand (weight matrix), a may carry batch dims
        out_data = a.data @ b.data

        def back_weight(dout):
            _accum(a, dout @ b.data.T)
            k, n = b.data.shape
            _accum(b, a.data.reshape(-1, k).T @ dout.reshape(-1, n))

        return _node(out_data, (a, b), back_weight)
    if an != bn or a.data.shape[:-2] != b.data.shape[:-2]:
        raise ShapeError(
            f"batched matmul needs matching batch dims: {a.data.shape} @ {b.data.shape}"
        )

    def back_batched(dout):
        _accum(a, dout @ b.data.swapaxes(-1, -2))
        _accum(b, a.data.swapaxes(-1, -2) @ dout)

    return _node(a.data @ b.data, (a, b), back_batched)


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def back(dout):
        _accum(a, np.ascontiguousarray(dout.transpose(inv)))

    return _node(np.ascontiguousarray(a.data.transpose(axes)), (a,), back)


def reshape(a, shape):
    old = a.data.shape

    def back(dout):
        _accum(a, dout.reshape(old))

    return _node(np.ascontiguousarray(a.data).reshape(shape), (a,), back)


def concat(tensors, axis=0):
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(dout):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * dout.ndim
            idx[axis] = slice(start, stop)
            _accum(t, np.ascontiguousarray(dout[tuple(idx)]))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def slice_axis(a, axis, start, stop):
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def back(dout):
        g = np.zeros_like(a.data)
        g[idx] = dout
        _accum(a, g)

    return _node(np.ascontiguousarray(a.data[idx]), (a,), back)


def tsum(a):
    def back(dout):
        _accum(a, np.full_like(a.data, dout))

    return _node(np.asarray(a.data.sum(), dtype=a.dtype), (a,), back)


def mean_over_axis(a, axis):
    n = a.data.shape[axis]

    def back(dout):
        _accum(a, np.repeat(np.expand_dims(dout / n, axis), n, axis=axis))

    return _node(a.data.mean(axis=axis), (a,), back)


def embedding_lookup(table, ids):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding id out of range [0, {table.data.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    flat = ids.reshape(-1)

    def back(dout):
        g = np.zeros_like(table.data)
        backend.embedding_grad(g, flat, dout.reshape(flat.size, -1))
        _accum(table, g)

    return _node(table.data[ids], (table,), back)


def softmax(x):
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax requires finite inputs")
    x2d = x.data.reshape(-1, x.data.shape[-1])
    y2d = backend.softmax_rows(np.ascontiguousarray(x2d))
    y = y2d.reshape(x.data.shape)

    def back(dout):
        dx = backend.softmax_rows_bwd(y2d, np.ascontiguousarray(dout.reshape(y2d.shape)))
        _accum(x, dx.reshape(x.data.shape))

    return _node(y, (x,), back)


def causal_softmax(scores):
    shape = scores.data.shape
    L = shape[-1]
    s3 = np.ascontiguousarray(scores.data.reshape(-1, shape[-2], L))
    p3 = backend.causal_softmax(s3)

    def back(dout):
        ds = backend.causal_softmax_bwd(p3, np.ascontiguousarray(dout.reshape(s3.shape)))
        _accum(scores, ds.reshape(shape))

    return _node(p3.reshape(shape), (scores,), back)


def rms_norm(x, weight, eps=1e-6):
    shape = x.data.shape
    x2d = np.ascontiguousarray(x.data.reshape(-1, shape[-1]))
    y2d, rstd = backend.rmsnorm_fwd(x2d, weight.data, x.dtype.type(eps))

    def back(dout):
        dx, dw = backend.rmsnorm_bwd(
            x2d, weight.data, rstd, np.ascontiguousarray(dout.reshape(x2d.shape))
        )
        _accum(x, dx.reshape(shape))
        _accum(weight, dw)

    return _node(y2d.reshape(shape), (x, weight), back)


def layer_norm(x, weight, eps=1e-6):
    shape = x.data.shape
    x2d = np.ascontiguousarray(x.data.reshape(-1, shape[-1]))
    y2d, xhat, rstd = backend.layernorm_fwd(x2d, weight.data, x.dtype.type(eps))

    def back(dout):
        dx, dw = backend.layernorm_bwd(
            xhat, weight.data, rstd, np.ascontiguousarray(dout.reshape(x2d.shape))
        )
        _accum(x, dx.reshape(shape))
        _accum(weight, dw)

    return _node(y2d.reshape(shape), (x, weight), back)


def silu(x):
    y = backend.silu_fwd(x.data)

    def back(dout):
        _accum(x, backend.silu_bwd(x.data, dout))

    return _node(y, (x,), back)


def dropout(x, rate, rng):
    """Inverted dropout; rate 0 returns x unchanged."""
    if rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(x.data.shape) >= rate).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - rate))
    mask = keep * scale

    def back(dout):
        _accum(x, dout * mask)

    return _node(x.data * mask, (x,), back)


def rope_2d(x, cos_h, sin_h, cos_w, sin_w):
    """Rotate (G, L, head_dim) q/k features by per-position 2D angles."""
    hd = x.data.shape[-1]
    if hd % 4 != 0:
        raise ShapeError(f"rope_2d needs head_dim divisible by 4, got {hd}")
    shape = x.data.shape
    x3 = np.ascontiguousarray(x.data.reshape(-1, shape[-2], hd))
    reps = x3.shape[0]
    y = backend.rope_2d_apply(x3, cos_h, sin_h, cos_w, sin_w)

    def back(dout):
        d3 = np.ascontiguousarray(dout.reshape(reps, shape[-2], hd))
        dx = backend.rope_2d_apply(d3, cos_h, -sin_h, cos_w, -sin_w)
        _accum(x, dx.reshape(shape))

    return _node(y.reshape(shape), (x,), back)


def grouped_cross_entropy(logits, label_groups, n_tokens):
    """Mean over n_tokens of -log softmax(logits_row)[label] summed per group.

    logits: (M, V); label_groups: (M, K) int ids. Each row's prediction is
    scored against all K ids of its group. K=1 with n_tokens=M is exactly the
    standard mean token cross-entropy.
    """
    labels = np.asarray(label_groups, dtype=np.int64)
    if labels.ndim != 2 or labels.shape[0] != logits.data.shape[0]:
        raise ShapeError(
            f"label groups {labels.shape} do not match logits rows {logits.data.shape}"
        )
    V = logits.data.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= V):
        raise IndexError(f"label out of range [0, {V})")
    row_losses = backend.grouped_ce_fwd(np.ascontiguousarray(logits.data), labels)
    loss = np.asarray(row_losses.sum() / n_tokens, dtype=logits.dtype)

    def back(dout):
        scale = logits.dtype.type(float(dout) / n_tokens)
        _accum(logits, backend.grouped_ce_bwd(logits.data, labels, scale))

    return _node(loss, (logits,), back)


def cross_entropy(logits, labels):
    """Mean over rows of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    return grouped_cross_entropy(logits, labels[:, None], labels.shape[0])
