"""Forward/backward kernels on plain numpy arrays.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache. Spatial tensors are
``N x C x H x W``; dense ones are ``N x F``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # N x C x H' x W' x kh x kw view
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d_forward(x, w, b, stride=1, pad=0):
    """Cross-correlation of ``x`` with ``K x C x kh x kw`` kernels ``w`` plus bias."""
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("conv2d expects 4-d input and kernel")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if pad < 0:
        raise ValueError("pad must be >= 0")
    N, C, H, W = x.shape
    K, Cw, kh, kw = w.shape
    if C != Cw:
        raise ValueError(f"input has {C} channels, kernel expects {Cw}")
    if H + 2 * pad < kh or W + 2 * pad < kw:
        raise ValueError("kernel larger than padded input")
    if kh == 1 and kw == 1 and pad == 0:
        xs = x[:, :, ::stride, ::stride]
        out = np.einsum("nchw,kc->nkhw", xs, w[:, :, 0, 0], optimize=True)
        out += b[None, :, None, None]
        return out, (x, w, stride, pad, None)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _windows(xp, kh, kw, stride)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # N x H' x W' x K
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out), (x, w, stride, pad, cols)


def conv2d_backward(dout, cache):
    x, w, stride, pad, cols = cache
    N, C, H, W = x.shape
    K, _, kh, kw = w.shape
    db = dout.sum(axis=(0, 2, 3))
    if cols is None:
        xs = x[:, :, ::stride, ::stride]
        dw = np.einsum("nkhw,nchw->kc", dout, xs, optimize=True)[:, :, None, None]
        dx = np.zeros_like(x)
        dx[:, :, ::stride, ::stride] = np.einsum("nkhw,kc->nchw", dout, w[:, :, 0, 0], optimize=True)
        return dx, dw, db
    Ho, Wo = dout.shape[2], dout.shape[3]
    dw = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))  # K x C x kh x kw
    dcols = np.tensordot(dout, w, axes=([1], [0]))  # N x H' x W' x C x kh x kw
    dxp = np.zeros((N, C, H + 2 * pad, W + 2 * pad), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, pad : pad + H, pad : pad + W] if pad else dxp
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(dout, x):
    return dout * (x > 0)


def maxpool_forward(x, k, stride=None):
    """Max over ``k x k`` windows; ties resolve to the first row-major position."""
    stride = k if stride is None else stride
    N, C, H, W = x.shape
    if k > H or k > W:
        raise ValueError(f"pool window {k} exceeds spatial size {H}x{W}")
    win = _windows(x, k, k, stride)
    Ho, Wo = win.shape[2], win.shape[3]
    flat = win.reshape(N, C, Ho, Wo, k * k)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, k, stride, arg)


def maxpool_backward(dout, cache):
    shape, k, stride, arg = cache
    N, C, H, W = shape
    Ho, Wo = arg.shape[2], arg.shape[3]
    dx = np.zeros(shape, dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            hit = dout * (arg == i * k + j)
            dx[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += hit
    return dx


def concat_forward(a, b):
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"cannot concatenate {a.shape} and {b.shape} on channels")
    return np.concatenate([a, b], axis=1), a.shape[1]


def concat_backward(dout, ca):
    return dout[:, :ca], dout[:, ca:]


def global_avg_pool_forward(x):
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(dout, shape):
    N, C, H, W = shape
    return np.broadcast_to((dout / (H * W))[:, :, None, None], shape).copy()


def fully_connected_forward(x, w, b):
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"input {x.shape} incompatible with weights {w.shape}")
    return x @ w + b, (x, w)


def fully_connected_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. ``logits``."""
    labels = np.asarray(labels, dtype=np.int64)
    N, K = logits.shape
    if labels.shape != (N,):
        raise ValueError("one label per row required")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    rows = np.arange(N)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1
    return float(loss), grad / N


def mse_loss(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2 * diff / diff.size
