"""Numba-compiled hot kernels.

All kernels are serial @njit: no prange, no fastmath, so results are
deterministic and row-independent (row r of an output never depends on how
many other rows the same call computes — the property the incremental-decode
equivalence tests rely on). Scalar arguments are pre-cast to the array dtype
by the caller so f32 paths stay f32.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def softmax_rows(x):
    R, V = x.shape
    out = np.empty_like(x)
    for r in range(R):
        mx = x[r, 0]
        for j in range(1, V):
            if x[r, j] > mx:
                mx = x[r, j]
        s = x[r, 0] * 0.0
        for j in range(V):
            e = np.exp(x[r, j] - mx)
            out[r, j] = e
            s += e
        inv = 1.0 / s
        for j in range(V):
            out[r, j] = out[r, j] * inv
    return out


@njit(cache=True)
def softmax_rows_bwd(y, dy):
    R, V = y.shape
    dx = np.empty_like(y)
    for r in range(R):
        dot = y[r, 0] * 0.0
        for j in range(V):
            dot += dy[r, j] * y[r, j]
        for j in range(V):
            dx[r, j] = y[r, j] * (dy[r, j] - dot)
    return dx


@njit(cache=True)
def causal_softmax(scores):
    # scores: (G, L, L); row i of each group attends to columns j <= i.
    G, L, _ = scores.shape
    out = np.zeros_like(scores)
    for g in range(G):
        for i in range(L):
            mx = scores[g, i, 0]
            for j in range(1, i + 1):
                if scores[g, i, j] > mx:
                    mx = scores[g, i, j]
            s = mx * 0.0
            for j in range(i + 1):
                e = np.exp(scores[g, i, j] - mx)
                out[g, i, j] = e
                s += e
            inv = 1.0 / s
            for j in range(i + 1):
                out[g, i, j] = out[g, i, j] * inv
    return out


@njit(cache=True)
def causal_softmax_bwd(probs, dprobs):
    G, L, _ = probs.shape
    dscores = np.zeros_like(probs)
    for g in range(G):
        for i in range(L):
            dot = probs[g, i, 0] * 0.0
            for j in range(i + 1):
                dot += dprobs[g, i, j] * probs[g, i, j]
            for j in range(i + 1):
                dscores[g, i, j] = probs[g, i, j] * (dprobs[g, i, j] - dot)
    return dscores


@njit(cache=True)
def rmsnorm_fwd(x, w, eps):
    R, d = x.shape
    y = np.empty_like(x)
    rstd = np.empty(R, dtype=x.dtype)
    for r in range(R):
        ss = x[r, 0] * 0.0
        for j in range(d):
            ss += x[r, j] * x[r, j]
        rs = 1.0 / np.sqrt(ss / d + eps)
        rstd[r] = rs
        for j in range(d):
            y[r, j] = x[r, j] * rs * w[j]
    return y, rstd


@njit(cache=True)
def rmsnorm_bwd(x, w, rstd, dy):
    R, d = x.shape
    dx = np.empty_like(x)
    dw = np.zeros_like(w)
    for r in range(R):
        rs = rstd[r]
        dot = x[r, 0] * 0.0
        for j in range(d):
            dwy = dy[r, j] * w[j]
            dot += dwy * x[r, j]
            dw[j] += dy[r, j] * x[r, j] * rs
        c = rs * rs * rs * dot / d
        for j in range(d):
            dx[r, j] = rs * w[j] * dy[r, j] - c * x[r, j]
    return dx, dw


@njit(cache=True)
def layernorm_fwd(x, w, eps):
    R, d = x.shape
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    rstd = np.empty(R, dtype=x.dtype)
    for r in range(R):
        mu = x[r, 0] * 0.0
        for j in range(d):
            mu += x[r, j]
        mu /= d
        var = x[r, 0] * 0.0
        for j in range(d):
            dlt = x[r, j] - mu
            var += dlt * dlt
        rs = 1.0 / np.sqrt(var / d + eps)
        rstd[r] = rs
        for j in range(d):
            h = (x[r, j] - mu) * rs
            xhat[r, j] = h
            y[r, j] = h * w[j]
    return y, xhat, rstd


@njit(cache=True)
def layernorm_bwd(xhat, w, rstd, dy):
    R, d = xhat.shape
    dx = np.empty_like(xhat)
    dw = np.zeros_like(w)
    for r in range(R):
        m1 = xhat[r, 0] * 0.0
        m2 = m1
        for j in range(d):
            dh = dy[r, j] * w[j]
            m1 += dh
            m2 += dh * xhat[r, j]
            dw[j] += dy[r, j] * xhat[r, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            dx[r, j] = (dy[r, j] * w[j] - m1 - xhat[r, j] * m2) * rstd[r]
    return dx, dw


@njit(cache=True)
def silu_fwd(x):
    flat = x.ravel()
    out = np.empty_like(flat)
    for i in range(flat.size):
        s = 1.0 / (1.0 + np.exp(-flat[i]))
        out[i] = flat[i] * s
    return out.reshape(x.shape)


@njit(cache=True)
def silu_bwd(x, dy):
    xf = x.ravel()
    df = dy.ravel()
    out = np.empty_like(xf)
    for i in range(xf.size):
        s = 1.0 / (1.0 + np.exp(-xf[i]))
        out[i] = df[i] * s * (1.0 + xf[i] * (1.0 - s))
    return out.reshape(x.shape)


@njit(cache=True)
def rope_2d_apply(x, cos_h, sin_h, cos_w, sin_w):
    # x: (G, L, hd). First hd/2 features rotate by the row-angle tables,
    # second hd/2 by the column tables; pairs are (j, j + hd/4) in each half.
    G, L, hd = x.shape
    q = hd // 4
    out = np.empty_like(x)
    for g in range(G):
        for l in range(L):
            for j in range(q):
                u = x[g, l, j]
                v = x[g, l, q + j]
                out[g, l, j] = u * cos_h[l, j] - v * sin_h[l, j]
                out[g, l, q + j] = u * sin_h[l, j] + v * cos_h[l, j]
                u = x[g, l, 2 * q + j]
                v = x[g, l, 3 * q + j]
                out[g, l, 2 * q + j] = u * cos_w[l, j] - v * sin_w[l, j]
                out[g, l, 3 * q + j] = u * sin_w[l, j] + v * cos_w[l, j]
    return out


@njit(cache=True)
def grouped_ce_fwd(logits, labels):
    # Per-row loss: sum over the K group labels of (logsumexp - logit[label]).
    # Accumulated in f64; the caller applies the 1/N normalization.
    M, V = logits.shape
    K = labels.shape[1]
    losses = np.empty(M, dtype=np.float64)
    for r in range(M):
        mx = logits[r, 0]
        for j in range(1, V):
            if logits[r, j] > mx:
                mx = logits[r, j]
        s = 0.0
        for j in range(V):
            s += np.exp(float(logits[r, j]) - float(mx))
        lse = np.log(s) + float(mx)
        acc = 0.0
        for k in range(K):
            acc += lse - float(logits[r, labels[r, k]])
        losses[r] = acc
    return losses


@njit(cache=True)
def grouped_ce_bwd(logits, labels, scale):
    # d loss / d logits[r] = scale * (K * softmax(logits[r]) - label counts).
    M, V = logits.shape
    K = labels.shape[1]
    dlogits = np.empty_like(logits)
    for r in range(M):
        mx = logits[r, 0]
        for j in range(1, V):
            if logits[r, j] > mx:
                mx = logits[r, j]
        s = logits[r, 0] * 0.0
        for j in range(V):
            e = np.exp(logits[r, j] - mx)
            dlogits[r, j] = e
            s += e
        c = scale * K / s
        for j in range(V):
            dlogits[r, j] = dlogits[r, j] * c
        for k in range(K):
            dlogits[r, labels[r, k]] -= scale
    return dlogits


@njit(cache=True)
def adamw_update(p, g, m, v, lr, b1, b2, eps, wd, bc1, bc2, clip_scale):
    for i in range(p.size):
        gi = g[i] * clip_scale
        m[i] = b1 * m[i] + (1.0 - b1) * gi
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
        p[i] = p[i] * (1.0 - lr * wd) - lr * (m[i] / bc1) / (np.sqrt(v[i] / bc2) + eps)


@njit(cache=True)
def sumsq(x):
    acc = 0.0
    for i in range(x.size):
        acc += float(x[i]) * float(x[i])
    return acc


@njit(cache=True)
def embedding_grad(gtable, ids, dy):
    L, d = dy.shape
    for i in range(L):
        row = ids[i]
        for j in range(d):
            gtable[row, j] += dy[i, j]


@njit(cache=True)
def matmul_det(a, b):
    # Fixed i-k-j accumulation: row i of the result depends only on a[i],
    # never on the other rows present in the call.
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=a.dtype)
    for i in range(m):
        for kk in range(k):
            aik = a[i, kk]
            for j in range(n):
                out[i, j] += aik * b[kk, j]
    return out


def warmup():
    """Compile every kernel for f32 (the default training dtype)."""
    f = np.float32
    x = np.ones((2, 4), f)
    softmax_rows(x)
    softmax_rows_bwd(x, x)
    s3 = np.ones((1, 2, 2), f)
    causal_softmax(s3)
    causal_softmax_bwd(s3, s3)
    w = np.ones(4, f)
    y, r = rmsnorm_fwd(x, w, f(1e-6))
    rmsnorm_bwd(x, w, r, y)
    y, xh, r = layernorm_fwd(x, w, f(1e-6))
    layernorm_bwd(xh, w, r, y)
    silu_bwd(x, silu_fwd(x))
    t = np.ones((2, 1), f)
    rope_2d_apply(np.ones((1, 2, 4), f), t, t, t, t)
    lab = np.zeros((2, 1), np.int64)
    grouped_ce_fwd(x, lab)
    grouped_ce_bwd(x, lab, f(0.5))
    v1 = np.ones(4, f)
    adamw_update(v1, v1.copy(), v1.copy(), v1.copy(), f(0.1), f(0.9), f(0.95),
                 f(1e-8), f(0.05), f(0.1), f(0.05), f(1.0))
    sumsq(v1)
    embedding_grad(x.copy(), np.zeros(2, np.int64), x)
    matmul_det(x, np.ones((4, 3), f))
