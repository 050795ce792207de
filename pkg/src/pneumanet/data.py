"""Dataset ingestion and preprocessing: decode, grayscale, resize, normalize,
and the stratified train/validation/test split.

Input layout is the class-per-directory convention:
root/{NORMAL,PNEUMONIA}/*.{png,jpg,jpeg}. Every image becomes a float32
(size, size, 1) tensor in [0, 1].
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .validation import require

logger = logging.getLogger(__name__)

CLASS_NAMES = ("NORMAL", "PNEUMONIA")
LABEL_TO_INT = {"NORMAL": 0, "PNEUMONIA": 1}
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
DEFAULT_IMAGE_SIZE = 148
# Rec. 601 luma weights for incidental RGB inputs.
LUMA = (0.299, 0.587, 0.114)


@dataclass
class ImageRecord:
    id: str
    label: str
    tensor: np.ndarray
    provenance: str = "original"

    def __post_init__(self):
        require(self.label in CLASS_NAMES, f"unknown label {self.label!r}")
        require(self.provenance in ("original", "augmented", "generated"),
                f"unknown provenance {self.provenance!r}")
        t = self.tensor
        require(t.ndim == 3 and t.shape[2] == 1,
                f"record tensor must be (h, w, 1), got {t.shape}")
        if t.size and (t.min() < 0.0 or t.max() > 1.0):
            raise ValueError(f"record {self.id!r} has values outside [0, 1]")

    @property
    def label_int(self) -> int:
        return LABEL_TO_INT[self.label]


@dataclass
class SplitDataset:
    train: list[ImageRecord]
    val: list[ImageRecord]
    test: list[ImageRecord]
    seed: int

    def sizes(self):
        return len(self.train), len(self.val), len(self.test)


def bilinear_resize(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain bilinear resampling (no anti-alias prefilter), half-pixel centers.

    Resizing to the input size is an exact identity: source coordinates land
    on integer pixel centers and the interpolation weights collapse.
    """
    h, w = plane.shape
    if (h, w) == (out_h, out_w):
        return plane.copy()
    src_y = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    src_x = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    fy = (src_y - y0).astype(plane.dtype)
    fx = (src_x - x0).astype(plane.dtype)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = plane[y0c][:, x0c] * (1 - fx) + plane[y0c][:, x1c] * fx
    bottom = plane[y1c][:, x0c] * (1 - fx) + plane[y1c][:, x1c] * fx
    return top * (1 - fy)[:, None] + bottom * fy[:, None]


def preprocess(raw: np.ndarray, image_size: int = DEFAULT_IMAGE_SIZE) -> np.ndarray:
    """8-bit pixels (h, w), (h, w, 1), or (h, w, 3) -> float32 (size, size, 1).

    RGB is reduced by luminance, then bilinear-resized, then scaled by 1/255
    and clipped into [0, 1].
    """
    raw = np.asarray(raw)
    if raw.ndim == 2:
        raw = raw[:, :, None]
    require(raw.ndim == 3 and raw.shape[2] in (1, 3),
            f"expected (h, w), (h, w, 1) or (h, w, 3) pixels, got {raw.shape}")
    require(raw.shape[0] > 0 and raw.shape[1] > 0, "image has a zero dimension")
    if raw.dtype != np.uint8:
        raise ValueError(f"expected 8-bit pixels, got dtype {raw.dtype}")
    plane = raw.astype(np.float32)
    if plane.shape[2] == 3:
        plane = LUMA[0] * plane[:, :, 0] + LUMA[1] * plane[:, :, 1] + LUMA[2] * plane[:, :, 2]
    else:
        plane = plane[:, :, 0]
    resized = bilinear_resize(plane, image_size, image_size)
    out = np.clip(resized / np.float32(255.0), 0.0, 1.0).astype(np.float32)
    return out[:, :, None]


def decode_image_bytes(data: bytes, image_size: int = DEFAULT_IMAGE_SIZE,
                       formats: tuple[str, ...] | None = None) -> np.ndarray:
    """Decode an encoded image and run it through the standard preprocessing.

    This is the single decode path shared by ingestion, the CLI predictor,
    and the HTTP service, so their outputs agree bit for bit.
    """
    with Image.open(io.BytesIO(data)) as img:
        if formats is not None and img.format not in formats:
            raise ValueError(f"unsupported image format {img.format!r}")
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if img.mode in ("RGBA", "P", "CMYK", "YCbCr") else "L")
        raw = np.asarray(img)
    return preprocess(raw, image_size)


def load_directory(root, image_size: int = DEFAULT_IMAGE_SIZE) -> list[ImageRecord]:
    """Load every decodable image under root/{NORMAL,PNEUMONIA}/ in
    lexicographic id order. Unreadable files are skipped with a warning
    naming the path; a class directory with no usable images is an error.
    """
    root = Path(root)
    require(root.is_dir(), f"data directory not found: {root}")
    records: list[ImageRecord] = []
    for class_name in CLASS_NAMES:
        class_dir = root / class_name
        if not class_dir.is_dir():
            raise ValueError(f"missing class directory: {class_dir}")
        loaded = 0
        for path in sorted(class_dir.iterdir()):
            if path.suffix.lower() not in IMAGE_EXTENSIONS or not path.is_file():
                continue
            rel = path.relative_to(root).as_posix()
            try:
                tensor = decode_image_bytes(path.read_bytes(), image_size)
            except (OSError, UnidentifiedImageError, ValueError) as exc:
                logger.warning("skipping unreadable image %s (%s)", path, exc)
                continue
            records.append(ImageRecord(id=rel, label=class_name, tensor=tensor))
            loaded += 1
        if loaded == 0:
            raise ValueError(f"no decodable images in class directory {class_dir}")
    records.sort(key=lambda r: r.id)
    return records


def split(records: list[ImageRecord], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitDataset:
    """Stratified split. Per class: val and test each get floor(ratio * n)
    records (at least one), train keeps the remainder; membership is decided
    by a seeded shuffle."""
    require(len(records) > 0, "cannot split an empty record list")
    require(abs(sum(ratios) - 1.0) < 1e-9, f"ratios must sum to 1, got {ratios}")
    require(all(r > 0 for r in ratios), "all three ratios must be positive")
    rng = np.random.default_rng(seed)
    train: list[ImageRecord] = []
    val: list[ImageRecord] = []
    test: list[ImageRecord] = []
    by_label = {name: [r for r in records if r.label == name] for name in CLASS_NAMES}
    for name, members in by_label.items():
        if not members:
            continue
        if len(members) < 3:
            raise ValueError(
                f"class {name} has only {len(members)} records; "
                "need at least 3 to populate train, val, and test"
            )
        n = len(members)
        n_val = max(1, math.floor(ratios[1] * n))
        n_test = max(1, math.floor(ratios[2] * n))
        order = rng.permutation(n)
        shuffled = [members[i] for i in order]
        val.extend(shuffled[:n_val])
        test.extend(shuffled[n_val : n_val + n_test])
        train.extend(shuffled[n_val + n_test :])
    return SplitDataset(train=train, val=val, test=test, seed=seed)


def records_to_arrays(records: list[ImageRecord]):
    """Stack records into (X, y) arrays for the trainer."""
    X = np.stack([r.tensor for r in records]).astype(np.float32)
    y = np.array([r.label_int for r in records], dtype=np.int64)
    return X, y


def write_cache(records: list[ImageRecord], data_path, index_path) -> None:
    """Raw little-endian float32 cache, one row-major image per record, plus
    a JSON index mapping id -> label, provenance, byte offset."""
    index = {}
    offset = 0
    with open(data_path, "wb") as fh:
        for rec in records:
            payload = rec.tensor[:, :, 0].astype("<f4").tobytes()
            fh.write(payload)
            index[rec.id] = {
                "label": rec.label,
                "provenance": rec.provenance,
                "offset": offset,
            }
            offset += len(payload)
    meta = {"image_size": int(records[0].tensor.shape[0]) if records else DEFAULT_IMAGE_SIZE,
            "records": index}
    with open(index_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_cache(data_path, index_path) -> list[ImageRecord]:
    with open(index_path) as fh:
        meta = json.load(fh)
    size = meta["image_size"]
    n_bytes = size * size * 4
    blob = Path(data_path).read_bytes()
    records = []
    for rec_id in sorted(meta["records"]):
        entry = meta["records"][rec_id]
        start = entry["offset"]
        plane = np.frombuffer(blob[start : start + n_bytes], dtype="<f4")
        if plane.size != size * size:
            raise ValueError(f"cache truncated at record {rec_id!r}")
        tensor = plane.reshape(size, size).astype(np.float32)[:, :, None]
        records.append(ImageRecord(id=rec_id, label=entry["label"], tensor=tensor,
                                   provenance=entry["provenance"]))
    return records


def save_png(tensor: np.ndarray, path) -> None:
    """Write a [0, 1] (h, w, 1) tensor as an 8-bit grayscale PNG."""
    plane = np.clip(np.rint(tensor[:, :, 0] * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(plane, mode="L").save(path, format="PNG")
