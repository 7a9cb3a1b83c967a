"""Pure-numpy fallbacks for the hot kernels.

Same signatures and same math as kernels_numba; results agree to floating
round-off (bitwise identity across backends is not a contract — determinism
holds within a backend). matmul_det keeps the row-independence property by
computing one row per BLAS call.
"""

from __future__ import annotations

import numpy as np


def softmax_rows(x):
    mx = x.max(axis=-1, keepdims=True)
    e = np.exp(x - mx)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_bwd(y, dy):
    dot = (y * dy).sum(axis=-1, keepdims=True)
    return y * (dy - dot)


def causal_softmax(scores):
    G, L, _ = scores.shape
    mask = np.triu(np.full((L, L), -np.inf, dtype=scores.dtype), k=1)
    s = scores + mask
    mx = s.max(axis=-1, keepdims=True)
    e = np.exp(s - mx)
    return e / e.sum(axis=-1, keepdims=True)


def causal_softmax_bwd(probs, dprobs):
    dot = (probs * dprobs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - dot)


def rmsnorm_fwd(x, w, eps):
    ms = np.mean(x * x, axis=-1)
    rstd = (1.0 / np.sqrt(ms + eps)).astype(x.dtype)
    return x * rstd[:, None] * w, rstd


def rmsnorm_bwd(x, w, rstd, dy):
    d = x.shape[-1]
    dwy = dy * w
    dot = (dwy * x).sum(axis=-1)
    c = (rstd**3 * dot / d)[:, None]
    dx = rstd[:, None] * dwy - c * x
    dw = (dy * x * rstd[:, None]).sum(axis=0)
    return dx, dw


def layernorm_fwd(x, w, eps):
    mu = x.mean(axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1)
    rstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x - mu) * rstd[:, None]
    return xhat * w, xhat, rstd


def layernorm_bwd(xhat, w, rstd, dy):
    dh = dy * w
    m1 = dh.mean(axis=-1, keepdims=True)
    m2 = (dh * xhat).mean(axis=-1, keepdims=True)
    dx = (dh - m1 - xhat * m2) * rstd[:, None]
    dw = (dy * xhat).sum(axis=0)
    return dx, dw


def silu_fwd(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def silu_bwd(x, dy):
    s = 1.0 / (1.0 + np.exp(-x))
    return dy * s * (1.0 + x * (1.0 - s))


def rope_2d_apply(x, cos_h, sin_h, cos_w, sin_w):
    G, L, hd = x.shape
    q = hd // 4
    out = np.empty_like(x)
    u, v = x[..., 0:q], x[..., q : 2 * q]
    out[..., 0:q] = u * cos_h - v * sin_h
    out[..., q : 2 * q] = u * sin_h + v * cos_h
    u, v = x[..., 2 * q : 3 * q], x[..., 3 * q :]
    out[..., 2 * q : 3 * q] = u * cos_w - v * sin_w
    out[..., 3 * q :] = u * sin_w + v * cos_w
    return out


def grouped_ce_fwd(logits, labels):
    x = logits.astype(np.float64, copy=False)
    mx = x.max(axis=-1)
    lse = np.log(np.exp(x - mx[:, None]).sum(axis=-1)) + mx
    gathered = np.take_along_axis(x, labels, axis=1)
    return (lse[:, None] - gathered).sum(axis=1)


def grouped_ce_bwd(logits, labels, scale):
    K = labels.shape[1]
    p = softmax_rows(logits)
    dlogits = p * (scale * K)
    np.subtract.at(dlogits, (np.arange(labels.shape[0])[:, None], labels), scale)
    return dlogits


def adamw_update(p, g, m, v, lr, b1, b2, eps, wd, bc1, bc2, clip_scale):
    g = g * clip_scale
    m *= b1
    m += (1 - b1) * g
    v *= b2
    v += (1 - b2) * g * g
    p *= 1 - lr * wd
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def sumsq(x):
    x64 = x.astype(np.float64, copy=False)
    return float(np.dot(x64, x64))


def embedding_grad(gtable, ids, dy):
    np.add.at(gtable, ids, dy)


def matmul_det(a, b):
    out = np.empty((a.shape[0], b.shape[1]), dtype=a.dtype)
    for i in range(a.shape[0]):
        out[i] = np.dot(a[i], b)
    return out


def warmup():
    pass
