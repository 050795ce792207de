import numpy as np
import pytest

from pneumanet import modelio
from pneumanet.modelio import (
    ChecksumMismatch,
    MalformedModelFile,
    TensorShapeMismatch,
    UnsupportedVersion,
    load_cnn_model,
    load_tensors,
    save_cnn_model,
    save_tensors,
)
from pneumanet.network import build_model, default_architecture, to_nchw


def small_model():
    return build_model(default_architecture(12), seed=3)


class TestRawFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {
            "a": rng.standard_normal((3, 4)).astype(np.float32),
            "b": rng.standard_normal(7).astype(np.float32),
        }
        path = tmp_path / "t.pnmx"
        version = save_tensors(path, {"kind": "test"}, tensors)
        descriptor, loaded, loaded_version = load_tensors(path)
        assert descriptor == {"kind": "test"}
        assert loaded_version == version
        for k in tensors:
            assert loaded[k].tobytes() == tensors[k].tobytes()
            assert loaded[k].shape == tensors[k].shape

    def test_non_float32_rejected_at_save(self, tmp_path):
        with pytest.raises(ValueError):
            save_tensors(tmp_path / "t.pnmx", {}, {"a": np.zeros(3, dtype=np.float64)})

    def test_flipped_payload_byte_rejected(self, tmp_path):
        path = tmp_path / "t.pnmx"
        save_tensors(path, {}, {"a": np.ones(5, dtype=np.float32)})
        blob = bytearray(path.read_bytes())
        blob[-3] ^= 0x40
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumMismatch):
            load_tensors(path)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "t.pnmx"
        save_tensors(path, {}, {"a": np.ones(64, dtype=np.float32)})
        blob = path.read_bytes()
        for cut in (3, 10, len(blob) - 5):
            path.write_bytes(blob[:cut])
            with pytest.raises(MalformedModelFile):
                load_tensors(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "t.pnmx"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(MalformedModelFile):
            load_tensors(path)

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "t.pnmx"
        save_tensors(path, {}, {"a": np.ones(2, dtype=np.float32)})
        blob = bytearray(path.read_bytes())
        blob[4] = 9  # little-endian version field
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedVersion):
            load_tensors(path)

    def test_shape_payload_disagreement_rejected(self, tmp_path):
        path = tmp_path / "t.pnmx"
        save_tensors(path, {}, {"a": np.ones(4, dtype=np.float32)})
        blob = path.read_bytes()
        # corrupt the declared shape inside the JSON header
        patched = blob.replace(b'"shape": [4]', b'"shape": [5]')
        assert patched != blob
        path.write_bytes(patched)
        # header length changed is malformed; same-length edit gives shape error
        with pytest.raises((TensorShapeMismatch, MalformedModelFile)):
            load_tensors(path)


class TestCnnCheckpoint:
    def test_model_round_trip_bit_exact(self, tmp_path):
        model = small_model()
        path = tmp_path / "model.pnmx"
        version = save_cnn_model(model, path)
        loaded, loaded_version = load_cnn_model(path)
        assert loaded_version == version
        assert loaded.tensors.keys() == model.tensors.keys()
        for k in model.tensors:
            assert loaded.tensors[k].tobytes() == model.tensors[k].tobytes()
        x = to_nchw(np.random.default_rng(1).random((2, 12, 12, 1)).astype(np.float32))
        p0, _ = model.forward(x)
        p1, _ = loaded.forward(x)
        assert p0.tobytes() == p1.tobytes()

    def test_gan_checkpoint_is_not_a_cnn(self, tmp_path):
        path = tmp_path / "model.pnmx"
        save_tensors(path, {"kind": "gan", "config": {}}, {"a": np.ones(1, dtype=np.float32)})
        with pytest.raises(modelio.ModelFileError):
            load_cnn_model(path)

    def test_no_partial_model_on_corruption(self, tmp_path):
        model = small_model()
        path = tmp_path / "model.pnmx"
        save_cnn_model(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 3])
        with pytest.raises(MalformedModelFile):
            load_cnn_model(path)
