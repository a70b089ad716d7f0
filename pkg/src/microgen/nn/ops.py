"""3D convolution, transposed convolution, batch norm and activations.

Tensors are ``(channels, d, h, w)`` or batched ``(batch, channels, d, h, w)``
numpy arrays; every op accepts both and preserves the rank. Convolution is
cross-correlation. Two padding modes exist:

* ``zero``: ordinary zero padding; conv output length (n+2p-k)//s + 1,
  transposed-conv output length (n-1)*s - 2p + k.
* ``circular``: indices wrap modulo the spatial length. A circular conv
  maps n -> n/s (n must be divisible by s) and its transposed counterpart
  is defined as the exact adjoint, mapping n -> n*s. Circular layers need
  p <= k-1.

The transposed convolution is the adjoint of the convolution with the same
spec, which is also what ties forward and backward passes together: the
input-gradient of one op is the forward of the other with the same kernel
array (only the role of the two channel axes swaps).

Kernel layouts: conv weights ``(out_ch, in_ch, kd, kh, kw)``, transposed
conv weights ``(in_ch, out_ch, kd, kh, kw)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PAD_MODES = ("zero", "circular")


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one (transposed) convolution layer."""

    in_channels: int
    out_channels: int
    kernel: tuple[int, int, int]
    stride: int = 1
    padding: int = 0
    pad_mode: str = "zero"

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if len(self.kernel) != 3 or min(self.kernel) < 1:
            raise ValueError(f"kernel dims must be >= 1, got {self.kernel}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if self.pad_mode not in PAD_MODES:
            raise ValueError(f"pad_mode must be one of {PAD_MODES}")


def conv_out_len(n: int, k: int, s: int, p: int, pad_mode: str = "zero") -> int:
    if pad_mode == "circular":
        if p > k - 1:
            raise ValueError(f"circular mode needs padding <= kernel-1, got p={p}, k={k}")
        if n % s:
            raise ValueError(f"circular conv needs stride to divide length, got n={n}, s={s}")
        return n // s
    if n + 2 * p < k:
        raise ValueError(f"input {n} plus padding smaller than kernel {k}")
    return (n + 2 * p - k) // s + 1


def convt_out_len(n: int, k: int, s: int, p: int, pad_mode: str = "zero") -> int:
    if pad_mode == "circular":
        if p > k - 1:
            raise ValueError(f"circular mode needs padding <= kernel-1, got p={p}, k={k}")
        return n * s
    out = (n - 1) * s - 2 * p + k
    if out < 1:
        raise ValueError(f"transposed conv output empty for n={n}, k={k}, s={s}, p={p}")
    return out


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == 4:
        return x[None], True
    if x.ndim == 5:
        return x, False
    raise ValueError(f"expected 4D or 5D tensor, got shape {x.shape}")


def _gather(x5: np.ndarray, kernel, stride: int, padding: int,
            pad_mode: str) -> np.ndarray:
    """Strided sliding windows: (batch, c, D', H', W', kd, kh, kw).

    Zero mode pads symmetrically; circular mode wrap-pads (p, k-1-p) per
    axis so window starts cover exactly n/stride positions.
    """
    kd, kh, kw = kernel
    if pad_mode == "zero":
        pads = [(padding, padding)] * 3
        xp = np.pad(x5, [(0, 0), (0, 0)] + pads)
    else:
        pads = [(padding, kd - 1 - padding), (padding, kh - 1 - padding),
                (padding, kw - 1 - padding)]
        xp = np.pad(x5, [(0, 0), (0, 0)] + pads, mode="wrap")
    win = sliding_window_view(xp, (kd, kh, kw), axis=(2, 3, 4))
    return win[:, :, ::stride, ::stride, ::stride]


def _scatter(y5: np.ndarray, w: np.ndarray, stride: int, padding: int,
             pad_mode: str, out_spatial) -> np.ndarray:
    """Adjoint of _gather followed by the channel contraction.

    y5: (batch, a, D, H, W); w: (a, b, kd, kh, kw). Every input voxel z
    scatters w*y into output positions z*stride + offset - padding, index
    pairs outside the output being dropped (zero mode) or wrapped
    (circular mode).

    The channel contraction runs as one GEMM per (kd, kh) offset pair
    over the kw slice of the kernel; the inner kw loop then only does
    strided accumulation. This keeps the hot path compute-bound instead
    of re-streaming the input once per kernel element.
    """
    n_batch = y5.shape[0]
    b_ch = w.shape[1]
    kd, kh, kw = w.shape[2:]
    dims_in = y5.shape[2:]
    dtype = np.result_type(y5.dtype, w.dtype)
    y_t = np.ascontiguousarray(np.moveaxis(y5, 1, 0))   # (a, batch, D, H, W)
    out = np.zeros((b_ch, n_batch) + tuple(out_spatial), dtype=dtype)

    if pad_mode == "circular":
        idx = [
            [(np.arange(dims_in[ax]) * stride + off - padding) % out_spatial[ax]
             for off in range(k)]
            for ax, k in enumerate((kd, kh, kw))
        ]
        for a in range(kd):
            for b in range(kh):
                tmp = np.tensordot(w[:, :, a, b, :], y_t, axes=([0], [0]))
                for c in range(kw):
                    out[:, :, idx[0][a][:, None, None],
                        idx[1][b][None, :, None],
                        idx[2][c][None, None, :]] += tmp[:, c]
        return np.ascontiguousarray(np.moveaxis(out, 0, 1))

    bounds = [
        [_scatter_bounds(dims_in[ax], stride, off - padding, out_spatial[ax])
         for off in range(k)]
        for ax, k in enumerate((kd, kh, kw))
    ]
    for a in range(kd):
        za = bounds[0][a]
        if za is None:
            continue
        for b in range(kh):
            zb = bounds[1][b]
            if zb is None:
                continue
            tmp = np.tensordot(w[:, :, a, b, :], y_t, axes=([0], [0]))
            for c in range(kw):
                zc = bounds[2][c]
                if zc is None:
                    continue
                (z0, z1, t0), (y0, y1, u0), (x0, x1, v0) = za, zb, zc
                out[:, :,
                    t0:t0 + (z1 - z0 - 1) * stride + 1:stride,
                    u0:u0 + (y1 - y0 - 1) * stride + 1:stride,
                    v0:v0 + (x1 - x0 - 1) * stride + 1:stride] \
                    += tmp[:, c, :, z0:z1, y0:y1, x0:x1]
    return np.ascontiguousarray(np.moveaxis(out, 0, 1))


def _scatter_bounds(n_in: int, stride: int, offset: int, n_out: int):
    """Valid source range [z0, z1) and first target t0 for one kernel offset."""
    z0 = max(0, -(offset // stride))
    z1 = min(n_in - 1, (n_out - 1 - offset) // stride) + 1
    if z0 >= z1:
        return None
    return z0, z1, z0 * stride + offset


def _check_channels(x5: np.ndarray, expected: int, what: str) -> None:
    if x5.shape[1] != expected:
        raise ValueError(f"{what}: got {x5.shape[1]} channels, expected {expected}")


def conv3d_forward(x, w, b=None, stride: int = 1, padding: int = 0,
                   pad_mode: str = "zero") -> np.ndarray:
    """Strided cross-correlation; w is (out_ch, in_ch, kd, kh, kw)."""
    x5, squeeze = _as_batch(x)
    _check_channels(x5, w.shape[1], "conv3d input")
    for n, k in zip(x5.shape[2:], w.shape[2:]):
        conv_out_len(n, k, stride, padding, pad_mode)
    col = _gather(x5, w.shape[2:], stride, padding, pad_mode)
    y = np.tensordot(col, w, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    y = np.moveaxis(y, -1, 1)
    if b is not None:
        y = y + b[None, :, None, None, None]
    y = np.ascontiguousarray(y)
    return y[0] if squeeze else y


def conv3d_backward(x, w, grad_out, stride: int = 1, padding: int = 0,
                    pad_mode: str = "zero", with_bias: bool = True):
    """Gradients (dx, dw, db) of conv3d_forward."""
    x5, squeeze = _as_batch(x)
    g5, _ = _as_batch(grad_out)
    col = _gather(x5, w.shape[2:], stride, padding, pad_mode)
    dw = np.tensordot(g5, col, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    db = g5.sum(axis=(0, 2, 3, 4)) if with_bias else None
    dx = _scatter(g5, w, stride, padding, pad_mode, x5.shape[2:])
    return (dx[0] if squeeze else dx), dw, db


def convt3d_forward(x, w, b=None, stride: int = 1, padding: int = 0,
                    pad_mode: str = "zero") -> np.ndarray:
    """Transposed (fractionally strided) conv; w is (in_ch, out_ch, kd, kh, kw)."""
    x5, squeeze = _as_batch(x)
    _check_channels(x5, w.shape[0], "transposed conv3d input")
    out_spatial = tuple(convt_out_len(n, k, stride, padding, pad_mode)
                        for n, k in zip(x5.shape[2:], w.shape[2:]))
    y = _scatter(x5, w, stride, padding, pad_mode, out_spatial)
    if b is not None:
        y += b[None, :, None, None, None]
    return y[0] if squeeze else y


def convt3d_backward(x, w, grad_out, stride: int = 1, padding: int = 0,
                     pad_mode: str = "zero", with_bias: bool = True):
    """Gradients (dx, dw, db) of convt3d_forward."""
    x5, squeeze = _as_batch(x)
    g5, _ = _as_batch(grad_out)
    col = _gather(g5, w.shape[2:], stride, padding, pad_mode)
    dx = np.tensordot(col, w, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    dx = np.ascontiguousarray(np.moveaxis(dx, -1, 1))
    dw = np.tensordot(x5, col, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    db = g5.sum(axis=(0, 2, 3, 4)) if with_bias else None
    return (dx[0] if squeeze else dx), dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var,
                      eps: float = 1e-5, momentum: float = 0.1,
                      mode: str = "eval"):
    """Per-channel normalization.

    Train mode normalizes by the biased batch variance over
    (batch, d, h, w) and updates the running statistics in place:
    running <- (1 - momentum) * running + momentum * batch (the running
    variance uses the unbiased batch variance). Eval mode applies the
    running statistics. Returns (y, cache) with the cache needed by
    batchnorm_backward.
    """
    x5, squeeze = _as_batch(x)
    _check_channels(x5, len(gamma), "batchnorm input")
    axes = (0, 2, 3, 4)
    shape = (1, -1, 1, 1, 1)
    if mode == "train":
        mu = x5.mean(axis=axes)
        var = x5.var(axis=axes)
        m = x5.size // x5.shape[1]
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x5 - mu.reshape(shape)) * inv_std.reshape(shape)
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (x5 - running_mean.reshape(shape)) * inv_std.reshape(shape)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    y = gamma.reshape(shape) * xhat + beta.reshape(shape)
    cache = (xhat, inv_std, mode, squeeze)
    return (y[0] if squeeze else y), cache


def batchnorm_backward(grad_out, gamma, cache):
    """Gradients (dx, dgamma, dbeta) of train-mode batchnorm_forward."""
    xhat, inv_std, mode, _ = cache
    if mode != "train":
        raise ValueError("backward requires a train-mode forward cache")
    g5, squeeze = _as_batch(grad_out)
    axes = (0, 2, 3, 4)
    shape = (1, -1, 1, 1, 1)
    m = g5.size // g5.shape[1]
    dbeta = g5.sum(axis=axes)
    dgamma = (g5 * xhat).sum(axis=axes)
    dxhat = g5 * gamma.reshape(shape)
    dx = (inv_std.reshape(shape) / m) * (
        m * dxhat
        - dxhat.sum(axis=axes).reshape(shape)
        - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape))
    return (dx[0] if squeeze else dx), dgamma, dbeta


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def leaky_relu(x, slope: float = 0.2):
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(grad_out, x, slope: float = 0.2):
    return grad_out * np.where(x > 0, 1.0, slope)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.result_type(x.dtype, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(grad_out, y):
    return grad_out * y * (1.0 - y)


def _channel_axis(x) -> int:
    if x.ndim == 4:
        return 0
    if x.ndim == 5:
        return 1
    raise ValueError(f"expected 4D or 5D tensor, got shape {x.shape}")


def softmax_channels(x):
    """Softmax over the channel axis per voxel, max-subtracted for stability."""
    ax = _channel_axis(x)
    shifted = x - x.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=ax, keepdims=True)


def softmax_channels_backward(grad_out, y):
    ax = _channel_axis(y)
    dot = (grad_out * y).sum(axis=ax, keepdims=True)
    return y * (grad_out - dot)
