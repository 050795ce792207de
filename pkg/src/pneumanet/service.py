"""HTTP inference service: upload a chest X-ray, get a label and confidence.

The uploaded image runs through the exact ingestion preprocessing used at
training time, so the service and the CLI predictor agree bit for bit.
The loaded model is immutable shared state; requests never mutate it.

Response schema (fixed field names, no extras):
    {"label": str, "probability": float, "raw_score": float, "model_version": str}

probability is the confidence in the returned label (always >= 0.5);
raw_score is the raw sigmoid output for the positive class.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path

from fastapi import FastAPI, File, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import network
from .data import decode_image_bytes
from .modelio import ModelFileError, load_cnn_model

logger = logging.getLogger(__name__)

MAX_UPLOAD_BYTES = 10 * 1024 * 1024
ACCEPTED_FORMATS = ("JPEG", "PNG")

MODEL_ENV = "PNEUMANET_MODEL"
BIND_ENV = "PNEUMANET_BIND"


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def prediction_payload(raw_score: float, model_version: str) -> dict:
    label = network.label_for(raw_score)
    confidence = raw_score if label == network.POSITIVE_LABEL else 1.0 - raw_score
    return {
        "label": label,
        "probability": confidence,
        "raw_score": raw_score,
        "model_version": model_version,
    }


def create_app(model_path=None, static_dir=None) -> FastAPI:
    """Build the service. A missing or unreadable model file does not stop
    startup: the service answers 503 until a valid model is present."""
    app = FastAPI(title="pneumanet inference service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    app.state.model = None
    app.state.model_version = None
    if model_path is not None:
        try:
            model, version = load_cnn_model(model_path)
            app.state.model = model
            app.state.model_version = version
            logger.info("loaded model %s (version %s)", model_path, version)
        except (OSError, ModelFileError) as exc:
            logger.error("cannot load model from %s: %s", model_path, exc)

    @app.get("/api/health")
    async def health():
        if app.state.model is None:
            return JSONResponse(status_code=503,
                                content={"status": "unavailable", "model_version": None})
        return {"status": "ok", "model_version": app.state.model_version}

    @app.post("/api/predict")
    async def predict(image: UploadFile | None = File(default=None)):
        if app.state.model is None:
            return _error(503, "model_not_loaded", "no model is loaded")
        if image is None:
            return _error(400, "missing_file", "multipart field 'image' is required")
        data = await image.read()
        if len(data) > MAX_UPLOAD_BYTES:
            return _error(413, "payload_too_large",
                          f"uploads are limited to {MAX_UPLOAD_BYTES} bytes")
        size = app.state.model.arch.input_shape[0]
        try:
            tensor = decode_image_bytes(data, size, formats=ACCEPTED_FORMATS)
        except Exception:
            return _error(400, "invalid_image", "the file could not be decoded as a JPEG or PNG image")
        raw = network.predict(app.state.model, tensor)
        return prediction_payload(raw, app.state.model_version)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def resolve_bind(bind: str | None) -> tuple[str, int]:
    """host:port string -> (host, port). The PNEUMANET_BIND env var wins."""
    value = os.environ.get(BIND_ENV) or bind or "127.0.0.1:8000"
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind address must be host:port, got {value!r}")
    return host, int(port)


def resolve_model_path(model_path):
    """Flag value for the model file; the PNEUMANET_MODEL env var wins."""
    return os.environ.get(MODEL_ENV) or model_path


def serve(model_path, bind: str | None = None, static_dir=None) -> None:
    """Run the service until terminated; in-flight requests finish on
    shutdown and the process exits cleanly. Raises on bind failure."""
    import signal
    import threading

    import uvicorn

    model_path = resolve_model_path(model_path)
    host, port = resolve_bind(bind)
    app = create_app(model_path=model_path, static_dir=static_dir)
    config = uvicorn.Config(app, host=host, port=port, log_level="info")
    server = uvicorn.Server(config)
    if threading.current_thread() is threading.main_thread():
        # uvicorn re-raises the captured termination signal after a graceful
        # stop; absorb it so a clean shutdown reports exit status 0.
        def _absorb(signum, frame):
            server.should_exit = True

        signal.signal(signal.SIGTERM, _absorb)
        signal.signal(signal.SIGINT, _absorb)
    server.run()
