"""Binary checkpoint format shared by the classifier and the GAN.

Layout (little-endian):

    magic "PNMX" | u32 version | u32 header_len | header JSON (utf-8)
    | u32 crc32(payload) | u64 payload_len | payload

The header carries a model descriptor plus the ordered tensor names and
shapes; the payload is the concatenation of the float32 buffers in that
order. Loading verifies magic, version, checksum, and shape consistency
before anything is returned, so a bad file never yields a partial model.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

MAGIC = b"PNMX"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<4sII")
_PAYLOAD_HEAD = struct.Struct("<IQ")


class ModelFileError(ValueError):
    """Base class for checkpoint file rejections."""


class MalformedModelFile(ModelFileError):
    """Truncated file, bad magic, or unparseable header."""


class UnsupportedVersion(ModelFileError):
    pass


class ChecksumMismatch(ModelFileError):
    pass


class TensorShapeMismatch(ModelFileError):
    pass


def save_tensors(path, descriptor: dict, tensors: dict[str, np.ndarray]) -> str:
    """Write a checkpoint; returns the content-derived model version string.

    Tensors must be float32 so that a load round-trips bit-exactly.
    """
    for name, arr in tensors.items():
        if arr.dtype != np.float32:
            raise ValueError(f"tensor {name!r} must be float32, got {arr.dtype}")
    order = list(tensors)
    payload = b"".join(np.ascontiguousarray(tensors[n]).astype("<f4").tobytes() for n in order)
    crc = zlib.crc32(payload)
    model_version = f"{FORMAT_VERSION}-{crc:08x}"
    header = {
        "descriptor": descriptor,
        "tensors": [{"name": n, "shape": list(tensors[n].shape)} for n in order],
        "model_version": model_version,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(_PAYLOAD_HEAD.pack(crc, len(payload)))
        fh.write(payload)
    return model_version


def load_tensors(path):
    """Read a checkpoint. Returns (descriptor, tensors, model_version)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEAD.size:
        raise MalformedModelFile(f"file too short to be a checkpoint: {path}")
    magic, version, header_len = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise MalformedModelFile(f"bad magic {magic!r}; not a checkpoint file: {path}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported format version {version}")
    pos = _HEAD.size
    if len(blob) < pos + header_len + _PAYLOAD_HEAD.size:
        raise MalformedModelFile(f"truncated header in {path}")
    try:
        header = json.loads(blob[pos : pos + header_len].decode("utf-8"))
        entries = [(e["name"], tuple(e["shape"])) for e in header["tensors"]]
        descriptor = header["descriptor"]
        model_version = header["model_version"]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedModelFile(f"unparseable header in {path}: {exc}") from None
    pos += header_len
    crc, payload_len = _PAYLOAD_HEAD.unpack_from(blob, pos)
    pos += _PAYLOAD_HEAD.size
    payload = blob[pos : pos + payload_len]
    if len(payload) != payload_len:
        raise MalformedModelFile(f"truncated payload in {path}")
    declared = sum(int(np.prod(shape)) for _, shape in entries) * 4
    if declared != payload_len:
        raise TensorShapeMismatch(
            f"payload holds {payload_len} bytes but declared shapes need {declared}"
        )
    if zlib.crc32(payload) != crc:
        raise ChecksumMismatch(f"payload checksum mismatch in {path}")
    tensors = {}
    offset = 0
    for name, shape in entries:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors[name] = arr.reshape(shape).astype(np.float32)
        offset += count * 4
    return descriptor, tensors, model_version


def save_cnn_model(model, path) -> str:
    """Persist a CnnModel (parameters and running statistics)."""
    descriptor = {
        "kind": "cnn",
        "input_shape": list(model.arch.input_shape),
        "blocks": [
            {"filters": b.filters, "kernel_size": b.kernel_size,
             "batchnorm": b.batchnorm, "pool": b.pool}
            for b in model.arch.blocks
        ],
    }
    return save_tensors(path, descriptor, model.tensors)


def load_cnn_model(path):
    """Load a classifier checkpoint. Returns (CnnModel, model_version)."""
    from .network import CnnArchitecture, ConvBlock, build_model

    descriptor, tensors, model_version = load_tensors(path)
    if descriptor.get("kind") != "cnn":
        raise TensorShapeMismatch(
            f"checkpoint holds a {descriptor.get('kind')!r} model, expected 'cnn'"
        )
    try:
        arch = CnnArchitecture(
            input_shape=tuple(descriptor["input_shape"]),
            blocks=tuple(ConvBlock(**blk) for blk in descriptor["blocks"]),
        )
    except (KeyError, TypeError) as exc:
        raise MalformedModelFile(f"bad architecture descriptor: {exc}") from None
    model = build_model(arch, seed=0)
    try:
        model.load_tensors(tensors)
    except (KeyError, ValueError) as exc:
        raise TensorShapeMismatch(str(exc)) from None
    return model, model_version
