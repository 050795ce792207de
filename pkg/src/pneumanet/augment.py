"""Affine image augmentation: random rotation, zoom, shear, horizontal flip.

Transforms are applied by inverse mapping about the image center with
bilinear (default) or nearest-neighbor sampling; reads outside the image
yield the configured fill value. Augmentation is offline: expand_class
materializes a fixed number of new images up front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import require

INTERPOLATIONS = ("bilinear", "nearest")


@dataclass(frozen=True)
class AugmentationConfig:
    rotation_max_deg: float = 40.0
    zoom_range: tuple[float, float] = (0.8, 1.2)
    shear_max_deg: float = 10.0
    hflip_prob: float = 0.5
    fill_value: float = 0.0
    interpolation: str = "bilinear"
    seed: int = 0

    def __post_init__(self):
        require(self.rotation_max_deg >= 0, "rotation_max_deg must be >= 0")
        lo, hi = self.zoom_range
        require(0 < lo <= hi, f"zoom range must be positive with low <= high, got {self.zoom_range}")
        require(self.shear_max_deg >= 0, "shear_max_deg must be >= 0")
        require(0.0 <= self.hflip_prob <= 1.0, "hflip_prob must lie in [0, 1]")
        require(self.interpolation in INTERPOLATIONS,
                f"interpolation must be one of {INTERPOLATIONS}")


IDENTITY_CONFIG = AugmentationConfig(
    rotation_max_deg=0.0, zoom_range=(1.0, 1.0), shear_max_deg=0.0, hflip_prob=0.0
)


@dataclass(frozen=True)
class AffineParams:
    """One sampled transform instance."""

    angle_deg: float = 0.0
    zoom: float = 1.0
    shear_deg: float = 0.0
    hflip: bool = False


def sample_params(config: AugmentationConfig, rng: np.random.Generator) -> AffineParams:
    """Uniform draw from the configured ranges."""
    angle = float(rng.uniform(-config.rotation_max_deg, config.rotation_max_deg))
    zoom = float(rng.uniform(config.zoom_range[0], config.zoom_range[1]))
    shear = float(rng.uniform(-config.shear_max_deg, config.shear_max_deg))
    hflip = bool(rng.random() < config.hflip_prob)
    return AffineParams(angle_deg=angle, zoom=zoom, shear_deg=shear, hflip=hflip)


def _inverse_matrix(params: AffineParams) -> np.ndarray:
    """Output-to-source coordinate map for the composition
    shear -> zoom -> rotate -> flip (all about the image center).

    Coordinates are (x, y) = (col, row) with y pointing down; a positive
    angle rotates the content clockwise on screen.
    """
    theta = math.radians(params.angle_deg)
    rot_inv = np.array([[math.cos(theta), math.sin(theta)],
                        [-math.sin(theta), math.cos(theta)]])
    zoom_inv = np.array([[1.0 / params.zoom, 0.0], [0.0, 1.0 / params.zoom]])
    shear_inv = np.array([[1.0, -math.tan(math.radians(params.shear_deg))], [0.0, 1.0]])
    flip_inv = np.array([[-1.0, 0.0], [0.0, 1.0]]) if params.hflip else np.eye(2)
    return shear_inv @ zoom_inv @ rot_inv @ flip_inv


def apply_affine(image: np.ndarray, params: AffineParams, config: AugmentationConfig) -> np.ndarray:
    """Transform one (h, w, 1) image. Same shape out; values clamped to [0, 1]."""
    image = np.asarray(image)
    require(image.ndim == 3 and image.shape[2] == 1,
            f"expected (h, w, 1) image, got shape {image.shape}")
    matrix = _inverse_matrix(params)
    if np.array_equal(matrix, np.eye(2)):
        return image.copy()

    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64),
                             np.arange(h, dtype=np.float64))
    xs = matrix[0, 0] * (cols - cx) + matrix[0, 1] * (rows - cy) + cx
    ys = matrix[1, 0] * (cols - cx) + matrix[1, 1] * (rows - cy) + cy
    plane = image[:, :, 0].astype(np.float64, copy=False)
    fill = config.fill_value

    if config.interpolation == "nearest":
        ri = np.rint(ys).astype(np.int64)
        ci = np.rint(xs).astype(np.int64)
        valid = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        out = np.where(valid, plane[np.clip(ri, 0, h - 1), np.clip(ci, 0, w - 1)], fill)
    else:
        x0 = np.floor(xs).astype(np.int64)
        y0 = np.floor(ys).astype(np.int64)
        fx = xs - x0
        fy = ys - y0

        def fetch(yy, xx):
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = plane[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
            return np.where(valid, vals, fill)

        out = ((1.0 - fy) * (1.0 - fx) * fetch(y0, x0)
               + (1.0 - fy) * fx * fetch(y0, x0 + 1)
               + fy * (1.0 - fx) * fetch(y0 + 1, x0)
               + fy * fx * fetch(y0 + 1, x0 + 1))

    out = np.clip(out, 0.0, 1.0).astype(image.dtype, copy=False)
    return out[:, :, None]


def expand_class(images, target_extra: int, config: AugmentationConfig):
    """Produce exactly target_extra augmented images by cycling through the
    sources in order, each with a freshly sampled transform.

    Every output index gets its own seeded substream, so results do not
    depend on evaluation order and are reproducible given config.seed.
    """
    require(target_extra >= 0, f"target_extra must be >= 0, got {target_extra}")
    if target_extra == 0:
        return []
    require(len(images) > 0, "cannot expand an empty source class")
    out = []
    for i in range(target_extra):
        rng = np.random.default_rng([config.seed, i])
        params = sample_params(config, rng)
        out.append(apply_affine(images[i % len(images)], params, config))
    return out


class AffineAugmenter(BaseEstimator, TransformerMixin):
    """Stateless transformer view of the augmentation pipeline: transform(X)
    returns one freshly transformed copy per input image."""

    def __init__(self, rotation_max_deg=40.0, zoom_range=(0.8, 1.2), shear_max_deg=10.0,
                 hflip_prob=0.5, fill_value=0.0, interpolation="bilinear", seed=0):
        self.rotation_max_deg = rotation_max_deg
        self.zoom_range = zoom_range
        self.shear_max_deg = shear_max_deg
        self.hflip_prob = hflip_prob
        self.fill_value = fill_value
        self.interpolation = interpolation
        self.seed = seed

    def _config(self) -> AugmentationConfig:
        return AugmentationConfig(
            rotation_max_deg=self.rotation_max_deg,
            zoom_range=tuple(self.zoom_range),
            shear_max_deg=self.shear_max_deg,
            hflip_prob=self.hflip_prob,
            fill_value=self.fill_value,
            interpolation=self.interpolation,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        self._config()  # validate parameters
        return self

    def transform(self, X):
        config = self._config()
        X = np.asarray(X)
        require(X.ndim == 4 and X.shape[-1] == 1,
                f"expected (n, h, w, 1) batch, got shape {X.shape}")
        out = np.empty_like(X)
        for i in range(X.shape[0]):
            rng = np.random.default_rng([config.seed, i])
            out[i] = apply_affine(X[i], sample_params(config, rng), config)
        return out
