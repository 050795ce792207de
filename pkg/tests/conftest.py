import io

import numpy as np
import pytest
from PIL import Image

from pneumanet.modelio import save_cnn_model
from pneumanet.network import build_model, default_architecture


def png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def jpeg_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="JPEG")
    return buf.getvalue()


@pytest.fixture(scope="session")
def small_model_file(tmp_path_factory):
    """A trained-shape (untrained) 16x16 classifier checkpoint on disk."""
    path = tmp_path_factory.mktemp("model") / "model.pnmx"
    model = build_model(default_architecture(16), seed=123)
    save_cnn_model(model, path)
    return path


@pytest.fixture()
def xray_png():
    rng = np.random.default_rng(0)
    return png_bytes(rng.integers(0, 256, size=(24, 24), dtype=np.uint8))
