"""Independent brute-force oracles and finite-difference helpers.

These deliberately avoid the library's own code paths: the conv oracle is a
scalar sliding-window sum, the pool oracle re-scans every window, and the
gradient checks perturb one coordinate at a time.
"""

import numpy as np


def conv2d_naive(x, kernels, bias, stride=1, padding=0):
    """Scalar cross-correlation accumulating in (channel, row, col) order."""
    n, in_c, h, w = x.shape
    out_c, _, k_h, k_w = kernels.shape
    out_h = (h + 2 * padding - k_h) // stride + 1
    out_w = (w + 2 * padding - k_w) // stride + 1
    zero = x.dtype.type(0)
    out = np.empty((n, out_c, out_h, out_w), dtype=x.dtype)
    for b in range(n):
        for o in range(out_c):
            for i in range(out_h):
                for j in range(out_w):
                    acc = zero
                    for c in range(in_c):
                        for u in range(k_h):
                            for v in range(k_w):
                                r = i * stride + u - padding
                                s = j * stride + v - padding
                                if 0 <= r < h and 0 <= s < w:
                                    acc = acc + x[b, c, r, s] * kernels[o, c, u, v]
                    out[b, o, i, j] = acc + bias.astype(x.dtype)[o]
    return out


def maxpool2d_naive(x, window, stride):
    n, c, h, w = x.shape
    out_h = (h - window) // stride + 1
    out_w = (w - window) // stride + 1
    out = np.empty((n, c, out_h, out_w), dtype=x.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(out_h):
                for j in range(out_w):
                    block = x[b, ch, i * stride : i * stride + window,
                              j * stride : j * stride + window]
                    out[b, ch, i, j] = block.max()
    return out


def confusion_naive(predictions, labels, threshold=0.5):
    """Counted one sample at a time. Returns (tp, tn, fp, fn)."""
    tp = tn = fp = fn = 0
    for p, y in zip(predictions, labels):
        positive = p >= threshold
        if positive and y == 1:
            tp += 1
        elif positive and y == 0:
            fp += 1
        elif not positive and y == 1:
            fn += 1
        else:
            tn += 1
    return tp, tn, fp, fn


def fd_gradient(f, x, h=1e-5):
    """Central finite differences of a scalar function at every coordinate."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
        it.iternext()
    return grad


def fd_gradient_at(f, x, indices, h=1e-5):
    """Central finite differences at selected flat indices only."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(len(indices))
    flat = x.reshape(-1)
    for k, idx in enumerate(indices):
        orig = flat[idx]
        flat[idx] = orig + h
        up = f(x)
        flat[idx] = orig - h
        down = f(x)
        flat[idx] = orig
        out[k] = (up - down) / (2.0 * h)
    return out


def rel_error(a, b, floor=1e-6):
    """Max elementwise |a - b| / max(|a|, |b|, floor).

    The floor keeps finite-difference truncation noise from dominating
    where the true gradient is ~0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
