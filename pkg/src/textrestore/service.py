"""HTTP inference service: PNG in, PNG out.

Endpoints (all under /api): restore, sweep, health, model. The service
never trains; weights are immutable after load. Requests run on a
bounded worker pool with 429 back-pressure when the queue is full.
"""

import base64
import hashlib
import io
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from fastapi import FastAPI, File, Form, HTTPException, Response, UploadFile
from PIL import Image

from .conditioning import interpolate_condition, make_provider
from .degradations import SR_FACTORS, degrade_gray, degrade_inpaint, degrade_sr
from .generator import normalize_sr_factor
from .restore import output_to_rgb, png_to_tensor, tensor_to_png
from .training import load_model

TASKS = ("inpaint", "sr", "colorize")


@dataclass
class _LoadedModel:
    model: object
    provider: object
    provider_spec: object
    spec: object
    checkpoint_hash: str
    step: int


class _WorkerPool:
    """Counting semaphore with a bounded wait queue."""

    def __init__(self, workers: int, queue_depth: int):
        self._sem = threading.Semaphore(workers)
        self._lock = threading.Lock()
        self._pending = 0
        self._limit = workers + queue_depth

    def __enter__(self):
        with self._lock:
            if self._pending >= self._limit:
                raise HTTPException(status_code=429, detail="inference queue full")
            self._pending += 1
        self._sem.acquire()
        return self

    def __exit__(self, *exc):
        self._sem.release()
        with self._lock:
            self._pending -= 1
        return False


def _bad_request(reason: str) -> HTTPException:
    return HTTPException(status_code=400, detail=reason)


def load_checkpoint_for_serving(path: str | Path) -> _LoadedModel:
    model, provider_spec, meta = load_model(path)
    provider = make_provider(provider_spec.name, provider_spec.embedding_dim)
    if provider.spec.embedding_dim != provider_spec.embedding_dim:
        raise RuntimeError(
            f"provider {provider_spec.name!r} dim {provider.spec.embedding_dim} "
            f"does not match checkpoint header {provider_spec.embedding_dim}"
        )
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return _LoadedModel(model, provider, provider_spec, model.spec, digest, meta["step"])


def create_app(
    checkpoint: Optional[str | Path] = None,
    workers: int = 2,
    queue_depth: int = 8,
) -> FastAPI:
    app = FastAPI(title="text-conditioned image restoration service")
    app.state.loaded = load_checkpoint_for_serving(checkpoint) if checkpoint else None
    pool = _WorkerPool(workers, queue_depth)

    def _require_model() -> _LoadedModel:
        if app.state.loaded is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return app.state.loaded

    def _decode_image(upload_bytes: bytes, size: int) -> torch.Tensor:
        try:
            image = png_to_tensor(upload_bytes)
        except Exception:
            raise _bad_request("image payload is not a decodable PNG")
        if image.shape[-2:] != (size, size):
            img = Image.open(io.BytesIO(upload_bytes)).convert("RGB").resize((size, size), Image.BICUBIC)
            arr = np.asarray(img, dtype=np.float32) / 255.0
            image = torch.from_numpy(arr).permute(2, 0, 1).contiguous()
        return image

    def _decode_mask(upload_bytes: bytes, size: int) -> torch.Tensor:
        try:
            img = Image.open(io.BytesIO(upload_bytes)).convert("L")
        except Exception:
            raise _bad_request("mask payload is not a decodable PNG")
        if img.size != (size, size):
            raise _bad_request(f"mask must be {size}x{size} to match the model input")
        arr = np.asarray(img, dtype=np.float32)
        return torch.from_numpy((arr >= 128).astype(np.float32))[None]

    def _validate(task, prompt, beta, sr_factor, mask_bytes):
        if task not in TASKS:
            raise _bad_request(f"unknown task {task!r}")
        if not 0.0 <= beta <= 1.0:
            raise _bad_request("beta must be in [0, 1]")
        if beta > 0 and not prompt:
            raise _bad_request("prompt is required when beta > 0")
        if task == "inpaint" and mask_bytes is None:
            raise _bad_request("inpaint requests require a mask")
        if task != "inpaint" and mask_bytes is not None:
            raise _bad_request("mask is only valid for inpaint requests")
        if task == "sr":
            if sr_factor is None:
                raise _bad_request("sr requests require sr_factor")
            if sr_factor not in SR_FACTORS:
                raise _bad_request(f"sr_factor must be one of {list(SR_FACTORS)}")
        elif sr_factor is not None:
            raise _bad_request("sr_factor is only valid for sr requests")

    def _run_restore(loaded: _LoadedModel, task, image, mask, prompt, beta, sr_factor, seed):
        sample, strength = _degrade(task, image, mask, sr_factor)
        if beta == 0.0:
            condition = loaded.provider.embed_image(image)
        else:
            text_emb = loaded.provider.embed_text(prompt)
            image_emb = loaded.provider.embed_image(image)
            condition = interpolate_condition(text_emb, image_emb, beta)
        torch.manual_seed(seed)
        output = loaded.model.restore(sample.degraded, condition.values, strength)
        return output_to_rgb(task, sample.degraded, output), condition.source

    def _degrade(task, image, mask, sr_factor):
        if task == "inpaint":
            return degrade_inpaint(image, mask), None
        if task == "sr":
            return degrade_sr(image, sr_factor), normalize_sr_factor(sr_factor)
        return degrade_gray(image), None

    @app.get("/api/health")
    def health():
        return {"alive": True, "model_loaded": app.state.loaded is not None}

    @app.get("/api/model")
    def model_info():
        loaded = _require_model()
        return {
            "generator_spec": loaded.spec.to_dict(),
            "provider_spec": loaded.provider_spec.to_dict(),
            "checkpoint_hash": loaded.checkpoint_hash,
            "step": loaded.step,
        }

    @app.post("/api/restore")
    def restore_endpoint(
        image: UploadFile = File(...),
        mask: Optional[UploadFile] = File(None),
        task: str = Form(...),
        prompt: Optional[str] = Form(None),
        beta: float = Form(1.0),
        sr_factor: Optional[int] = Form(None),
        seed: int = Form(0),
    ):
        loaded = _require_model()
        if task != loaded.spec.task:
            raise HTTPException(
                status_code=409,
                detail=f"model was trained for task {loaded.spec.task!r}, not {task!r}",
            )
        mask_bytes = mask.file.read() if mask is not None else None
        _validate(task, prompt, beta, sr_factor, mask_bytes)
        size = loaded.spec.image_size
        img = _decode_image(image.file.read(), size)
        mask_t = _decode_mask(mask_bytes, size) if mask_bytes is not None else None
        start = time.monotonic()
        with pool:
            restored, source = _run_restore(loaded, task, img, mask_t, prompt, beta, sr_factor, seed)
        elapsed_ms = (time.monotonic() - start) * 1000.0
        metadata = {
            "model_step": loaded.step,
            "checkpoint_hash": loaded.checkpoint_hash,
            "timing_ms": round(elapsed_ms, 3),
            "condition_source": source,
            "beta": beta,
        }
        return Response(
            content=tensor_to_png(restored),
            media_type="image/png",
            headers={"X-Restore-Metadata": json.dumps(metadata)},
        )

    @app.post("/api/sweep")
    def sweep_endpoint(
        image: UploadFile = File(...),
        mask: Optional[UploadFile] = File(None),
        task: str = Form(...),
        prompt: Optional[str] = Form(None),
        betas: str = Form(...),
        sr_factor: Optional[int] = Form(None),
        seed: int = Form(0),
    ):
        loaded = _require_model()
        if task != loaded.spec.task:
            raise HTTPException(status_code=409, detail=f"model serves task {loaded.spec.task!r}")
        try:
            beta_list = [float(b) for b in json.loads(betas)]
        except (ValueError, TypeError):
            raise _bad_request("betas must be a JSON array of numbers")
        if not 1 <= len(beta_list) <= 9:
            raise _bad_request("betas must contain between 1 and 9 values")
        if beta_list != sorted(beta_list):
            raise _bad_request("betas must be ascending")
        mask_bytes = mask.file.read() if mask is not None else None
        # validate against the largest beta: prompt needed if any beta > 0
        _validate(task, prompt, max(beta_list), sr_factor, mask_bytes)
        size = loaded.spec.image_size
        img = _decode_image(image.file.read(), size)
        mask_t = _decode_mask(mask_bytes, size) if mask_bytes is not None else None
        results = []
        with pool:
            for beta in beta_list:
                start = time.monotonic()
                restored, source = _run_restore(loaded, task, img, mask_t, prompt, beta, sr_factor, seed)
                results.append(
                    {
                        "beta": beta,
                        "condition_source": source,
                        "timing_ms": round((time.monotonic() - start) * 1000.0, 3),
                        "png_base64": base64.b64encode(tensor_to_png(restored)).decode("ascii"),
                    }
                )
        return {"results": results}

    return app


def main() -> None:  # pragma: no cover - exercised via CLI
    import uvicorn

    checkpoint = os.environ.get("TEXTRESTORE_CHECKPOINT")
    port = int(os.environ.get("TEXTRESTORE_PORT", "8000"))
    workers = int(os.environ.get("TEXTRESTORE_WORKERS", "2"))
    uvicorn.run(create_app(checkpoint, workers=workers), host="0.0.0.0", port=port)
