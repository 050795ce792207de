"""Layer primitives with explicit forward and backward passes on numpy arrays.

Spatial operations use the NCHW layout: (batch, channels, height, width).
Every function preserves the dtype of its input, leaves its arguments
untouched, and raises ValueError on shape violations. Forward passes are
pure; batch normalization is the only primitive with mutable state and it
writes only into the RunningStats instance it is handed (train mode).

Convolution accumulates in a fixed row-major order over (channel, kernel
row, kernel col) so that results are reproducible bit-for-bit and agree
exactly with a scalar sliding-window sum performed in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import ensure_finite, require, shape_mismatch


@dataclass(frozen=True)
class LayerGrad:
    """Gradients produced by one layer: per-parameter grads plus the input grad."""

    param_grads: tuple[np.ndarray, ...]
    input_grad: np.ndarray


@dataclass
class RunningStats:
    """Exponential moving averages of per-feature mean and variance."""

    mean: np.ndarray
    var: np.ndarray


def conv2d_output_shape(in_h, in_w, k_h, k_w, stride, padding):
    out_h = (in_h + 2 * padding - k_h) // stride + 1
    out_w = (in_w + 2 * padding - k_w) // stride + 1
    return out_h, out_w


def _check_conv_args(x, kernels, stride, padding):
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be 4-d (n, c, h, w), got shape {x.shape}")
    if kernels.ndim != 4:
        raise ValueError(
            f"conv2d kernels must be 4-d (out_c, in_c, kh, kw), got shape {kernels.shape}"
        )
    if x.shape[1] != kernels.shape[1]:
        raise shape_mismatch(
            "conv2d input channels vs kernel channels", x.shape, kernels.shape
        )
    require(stride >= 1, f"stride must be positive, got {stride}")
    require(padding >= 0, f"padding must be non-negative, got {padding}")
    n, c, h, w = x.shape
    _, _, k_h, k_w = kernels.shape
    if h + 2 * padding < k_h or w + 2 * padding < k_w:
        raise ValueError(
            f"padded input ({h + 2 * padding}x{w + 2 * padding}) smaller than "
            f"kernel ({k_h}x{k_w})"
        )


def conv2d_forward(x, kernels, bias, stride=1, padding=0):
    """Cross-correlate a batch with a kernel stack.

    x: (n, in_c, h, w); kernels: (out_c, in_c, kh, kw); bias: (out_c,).
    Returns (n, out_c, out_h, out_w) with out dims floor((in + 2p - k)/s) + 1.
    No kernel flip is applied.
    """
    _check_conv_args(x, kernels, stride, padding)
    out_c, in_c, k_h, k_w = kernels.shape
    if bias.shape != (out_c,):
        raise shape_mismatch("conv2d bias", (out_c,), bias.shape)
    n = x.shape[0]
    out_h, out_w = conv2d_output_shape(x.shape[2], x.shape[3], k_h, k_w, stride, padding)
    x_pad = _pad_spatial(x, padding)
    out = np.zeros((n, out_c, out_h, out_w), dtype=x.dtype)
    # Fixed accumulation order (c, u, v); each term is a single vectorized add,
    # so per output element the scalar sum order matches a naive loop exactly.
    for c in range(in_c):
        for u in range(k_h):
            for v in range(k_w):
                patch = x_pad[:, c, u : u + stride * out_h : stride,
                              v : v + stride * out_w : stride]
                out += patch[:, None, :, :] * kernels[None, :, c, u, v, None, None]
    out += bias.astype(x.dtype)[None, :, None, None]
    return ensure_finite("conv2d output", out)


def conv2d_backward(x, kernels, upstream, stride=1, padding=0):
    """Gradients of conv2d_forward. param_grads = (d_kernels, d_bias)."""
    _check_conv_args(x, kernels, stride, padding)
    out_c, in_c, k_h, k_w = kernels.shape
    n = x.shape[0]
    out_h, out_w = conv2d_output_shape(x.shape[2], x.shape[3], k_h, k_w, stride, padding)
    if upstream.shape != (n, out_c, out_h, out_w):
        raise shape_mismatch(
            "conv2d upstream gradient", (n, out_c, out_h, out_w), upstream.shape
        )
    x_pad = _pad_spatial(x, padding)
    d_kernels = np.zeros_like(kernels)
    dx_pad = np.zeros_like(x_pad)
    for u in range(k_h):
        for v in range(k_w):
            patch = x_pad[:, :, u : u + stride * out_h : stride,
                          v : v + stride * out_w : stride]
            d_kernels[:, :, u, v] = np.einsum("nohw,nchw->oc", upstream, patch)
            dx_pad[:, :, u : u + stride * out_h : stride,
                   v : v + stride * out_w : stride] += np.einsum(
                "nohw,oc->nchw", upstream, kernels[:, :, u, v]
            )
    d_bias = upstream.sum(axis=(0, 2, 3))
    dx = _unpad_spatial(dx_pad, padding)
    return LayerGrad(param_grads=(d_kernels, d_bias), input_grad=dx)


def conv_transpose2d_output_shape(in_h, in_w, k_h, k_w, stride, padding):
    out_h = (in_h - 1) * stride - 2 * padding + k_h
    out_w = (in_w - 1) * stride - 2 * padding + k_w
    return out_h, out_w


def conv_transpose2d_forward(x, kernels, bias, stride=1, padding=0):
    """Fractionally-strided convolution (the adjoint of conv2d).

    x: (n, in_c, h, w); kernels: (in_c, out_c, kh, kw); bias: (out_c,).
    Returns (n, out_c, (h-1)*s - 2p + kh, (w-1)*s - 2p + kw).
    """
    if x.ndim != 4 or kernels.ndim != 4:
        raise ValueError(
            f"conv_transpose2d expects 4-d input and kernels, got {x.shape} and {kernels.shape}"
        )
    if x.shape[1] != kernels.shape[0]:
        raise shape_mismatch(
            "conv_transpose2d input channels vs kernel channels", x.shape, kernels.shape
        )
    in_c, out_c, k_h, k_w = kernels.shape
    n, _, h, w = x.shape
    out_h, out_w = conv_transpose2d_output_shape(h, w, k_h, k_w, stride, padding)
    require(out_h >= 1 and out_w >= 1, "conv_transpose2d output would be empty")
    buf = np.zeros((n, out_c, out_h + 2 * padding, out_w + 2 * padding), dtype=x.dtype)
    for u in range(k_h):
        for v in range(k_w):
            buf[:, :, u : u + stride * h : stride,
                v : v + stride * w : stride] += np.einsum(
                "nihw,io->nohw", x, kernels[:, :, u, v]
            )
    out = _unpad_spatial(buf, padding)
    out = out + bias.astype(x.dtype)[None, :, None, None]
    return ensure_finite("conv_transpose2d output", out)


def conv_transpose2d_backward(x, kernels, upstream, stride=1, padding=0):
    """Gradients of conv_transpose2d_forward. param_grads = (d_kernels, d_bias)."""
    in_c, out_c, k_h, k_w = kernels.shape
    n, _, h, w = x.shape
    out_h, out_w = conv_transpose2d_output_shape(h, w, k_h, k_w, stride, padding)
    if upstream.shape != (n, out_c, out_h, out_w):
        raise shape_mismatch(
            "conv_transpose2d upstream gradient", (n, out_c, out_h, out_w), upstream.shape
        )
    up_pad = _pad_spatial(upstream, padding)
    d_kernels = np.zeros_like(kernels)
    dx = np.zeros_like(x)
    for u in range(k_h):
        for v in range(k_w):
            window = up_pad[:, :, u : u + stride * h : stride,
                            v : v + stride * w : stride]
            d_kernels[:, :, u, v] = np.einsum("nihw,nohw->io", x, window)
            dx += np.einsum("nohw,io->nihw", window, kernels[:, :, u, v])
    d_bias = upstream.sum(axis=(0, 2, 3))
    return LayerGrad(param_grads=(d_kernels, d_bias), input_grad=dx)


def maxpool2d_forward(x, window, stride):
    """Max pooling. Returns (output, argmax) where argmax holds the flat index
    of the winning position inside each window, for backward routing."""
    require(window >= 1, f"window must be positive, got {window}")
    require(stride >= 1, f"stride must be positive, got {stride}")
    if x.ndim != 4:
        raise ValueError(f"maxpool input must be 4-d, got shape {x.shape}")
    n, c, h, w = x.shape
    if h < window or w < window:
        raise ValueError(f"pool window {window} larger than input {h}x{w}")
    out_h = (h - window) // stride + 1
    out_w = (w - window) // stride + 1
    sn, sc, sh, sw = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, out_h, out_w, window, window),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )
    flat = view.reshape(n, c, out_h, out_w, window * window)
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    return ensure_finite("maxpool output", out), argmax


def maxpool2d_backward(argmax, upstream, input_shape, window, stride):
    """Route each upstream gradient to the argmax position of its window."""
    n, c, h, w = input_shape
    out_h, out_w = upstream.shape[2], upstream.shape[3]
    if argmax.shape != upstream.shape:
        raise shape_mismatch("maxpool argmax vs upstream", upstream.shape, argmax.shape)
    win_r, win_c = np.divmod(argmax, window)
    rows = np.arange(out_h)[None, None, :, None] * stride + win_r
    cols = np.arange(out_w)[None, None, None, :] * stride + win_c
    batch = np.arange(n)[:, None, None, None]
    chan = np.arange(c)[None, :, None, None]
    dx = np.zeros(input_shape, dtype=upstream.dtype)
    # Windows may overlap when stride < window, so accumulate.
    np.add.at(dx, (batch, chan, rows, cols), upstream)
    return dx


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    centered: np.ndarray
    gamma: np.ndarray
    reduce_axes: tuple[int, ...]
    m: int


def _per_feature(arr, ndim):
    """Reshape a (features,) vector so it broadcasts along axis 1 of an
    (n, f) or (n, c, h, w) activation."""
    return arr.reshape(1, -1) if ndim == 2 else arr.reshape(1, -1, 1, 1)


def batchnorm_forward(x, gamma, beta, eps=1e-5, mode="train", running=None, momentum=0.9):
    """Per-feature batch normalization with learned scale and shift.

    Accepts (n, features) or (n, c, h, w); features are axis 1 either way.
    Train mode normalizes with batch statistics and, when a RunningStats is
    supplied, folds them into it in place: new = momentum*old + (1-m)*batch.
    Infer mode normalizes with the running statistics only and mutates
    nothing. Returns (output, cache); cache is None in infer mode.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if x.ndim not in (2, 4):
        raise ValueError(f"batchnorm input must be 2-d or 4-d, got shape {x.shape}")
    n_features = x.shape[1]
    for name, arr in (("gamma", gamma), ("beta", beta)):
        if arr.shape != (n_features,):
            raise shape_mismatch(f"batchnorm {name}", (n_features,), arr.shape)
    reduce_axes = (0,) if x.ndim == 2 else (0, 2, 3)
    g = _per_feature(gamma, x.ndim)
    b = _per_feature(beta, x.ndim)

    if mode == "infer":
        require(running is not None, "infer mode requires running statistics")
        mean = _per_feature(running.mean, x.ndim)
        var = _per_feature(running.var, x.ndim)
        x_hat = (x - mean) / np.sqrt(var + eps)
        out = g * x_hat + b
        return ensure_finite("batchnorm output", out.astype(x.dtype, copy=False)), None

    if x.shape[0] < 2:
        raise ValueError(
            f"batchnorm train mode needs a batch of at least 2, got {x.shape[0]}"
        )
    m = int(np.prod([x.shape[a] for a in reduce_axes]))
    batch_mean = x.mean(axis=reduce_axes)
    centered = x - _per_feature(batch_mean, x.ndim)
    batch_var = np.mean(centered * centered, axis=reduce_axes)
    inv_std = 1.0 / np.sqrt(batch_var + eps)
    x_hat = centered * _per_feature(inv_std, x.ndim)
    out = g * x_hat + b
    if running is not None:
        running.mean[...] = momentum * running.mean + (1.0 - momentum) * batch_mean
        running.var[...] = momentum * running.var + (1.0 - momentum) * batch_var
    cache = BatchNormCache(
        x_hat=x_hat, inv_std=inv_std, centered=centered, gamma=gamma,
        reduce_axes=reduce_axes, m=m,
    )
    return ensure_finite("batchnorm output", out.astype(x.dtype, copy=False)), cache


def batchnorm_backward(cache, upstream):
    """Gradients of train-mode batchnorm. param_grads = (d_gamma, d_beta)."""
    axes = cache.reduce_axes
    d_gamma = (upstream * cache.x_hat).sum(axis=axes)
    d_beta = upstream.sum(axis=axes)
    dx_hat = upstream * _per_feature(cache.gamma, upstream.ndim)
    inv = _per_feature(cache.inv_std, upstream.ndim)
    m = cache.m
    sum_dx_hat = dx_hat.sum(axis=axes, keepdims=True)
    sum_dx_hat_xhat = (dx_hat * cache.x_hat).sum(axis=axes, keepdims=True)
    dx = (inv / m) * (m * dx_hat - sum_dx_hat - cache.x_hat * sum_dx_hat_xhat)
    return LayerGrad(param_grads=(d_gamma, d_beta), input_grad=dx)


def dense_forward(x, weights, bias):
    """Affine map: (n, in_f) @ (in_f, out_f) + (out_f,)."""
    if x.ndim != 2 or weights.ndim != 2:
        raise ValueError(
            f"dense expects 2-d input and weights, got {x.shape} and {weights.shape}"
        )
    if x.shape[1] != weights.shape[0]:
        raise shape_mismatch("dense input vs weights", x.shape, weights.shape)
    if bias.shape != (weights.shape[1],):
        raise shape_mismatch("dense bias", (weights.shape[1],), bias.shape)
    out = x @ weights + bias
    return ensure_finite("dense output", out)


def dense_backward(x, weights, upstream):
    """Gradients of dense_forward. param_grads = (d_weights, d_bias)."""
    if upstream.shape != (x.shape[0], weights.shape[1]):
        raise shape_mismatch(
            "dense upstream gradient", (x.shape[0], weights.shape[1]), upstream.shape
        )
    d_weights = x.T @ upstream
    d_bias = upstream.sum(axis=0)
    dx = upstream @ weights.T
    return LayerGrad(param_grads=(d_weights, d_bias), input_grad=dx)


ACTIVATION_KINDS = ("relu", "leaky_relu", "sigmoid", "tanh")


def activation(x, kind, alpha=0.2):
    """Elementwise nonlinearity. sigmoid output is clipped into the open (0, 1)."""
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "leaky_relu":
        return np.where(x > 0, x, alpha * x)
    if kind == "sigmoid":
        x = np.asarray(x)
        if not np.issubdtype(x.dtype, np.floating):
            x = x.astype(np.float64)
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        # Keep the output strictly inside (0, 1) even where exp underflows.
        tiny = np.finfo(out.dtype).eps
        return np.clip(out, tiny, 1.0 - tiny)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}")


def activation_backward(x, kind, upstream, alpha=0.2):
    """Chain upstream through the derivative of the named activation at x."""
    if kind == "relu":
        return upstream * (x > 0)
    if kind == "leaky_relu":
        return upstream * np.where(x > 0, 1.0, alpha).astype(x.dtype)
    if kind == "sigmoid":
        s = activation(x, "sigmoid")
        return upstream * s * (1.0 - s)
    if kind == "tanh":
        t = np.tanh(x)
        return upstream * (1.0 - t * t)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}")


def _pad_spatial(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _unpad_spatial(x, padding):
    if padding == 0:
        return x
    return x[:, :, padding:-padding, padding:-padding]
