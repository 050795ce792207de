"""Input validation helpers shared by the layer primitives and estimators."""

from __future__ import annotations

import numpy as np


def shape_mismatch(what: str, expected, got) -> ValueError:
    """Build the standard shape-mismatch error, naming both shapes."""
    return ValueError(f"{what}: expected shape {tuple(expected)}, got {tuple(got)}")


def require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


def ensure_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_float_array(x, name: str = "array") -> np.ndarray:
    arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    return arr


def check_image_batch(X, image_size: int | None = None) -> np.ndarray:
    """Validate a batch of channel-last images: (n, height, width, 1) in [0, 1]."""
    X = as_float_array(X, "X")
    if X.ndim != 4 or X.shape[-1] != 1:
        raise ValueError(
            f"expected image batch of shape (n, height, width, 1), got {X.shape}"
        )
    if image_size is not None and X.shape[1:3] != (image_size, image_size):
        raise shape_mismatch(
            "image batch", (X.shape[0], image_size, image_size, 1), X.shape
        )
    ensure_finite("image batch", X)
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError("image batch values must lie in [0, 1]")
    return X


def check_binary_labels(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if n is not None and y.shape != (n,):
        raise shape_mismatch("labels", (n,), y.shape)
    values = np.unique(y)
    if not np.isin(values, (0, 1)).all():
        raise ValueError(f"labels must be in {{0, 1}}, got values {values.tolist()}")
    return y.astype(np.int64)
