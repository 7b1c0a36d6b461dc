"""HTTP inference API.

JSON in, JSON out; images and masks travel as base64 PNG. Mask convention:
white (255) = context, black (0) = target. Checkpoint weights are read-only
after load; a worker semaphore caps concurrent autoregressive sampling jobs
since each one is CPU-heavy and internally sequential.
"""

import base64
import io
import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from PIL import Image
from pydantic import BaseModel, Field

from . import __version__
from .logistic_mixture import intensity_to_value, value_to_intensity
from .model import inpaint as run_inpaint
from .model import latent_traversal
from .training import load_model


def png_to_image(b64):
    """base64 PNG -> [M, M, 3] value-space array."""
    try:
        img = Image.open(io.BytesIO(base64.b64decode(b64))).convert("RGB")
    except Exception as e:
        raise HTTPException(status_code=422, detail=f"bad image payload: {e}") from None
    return intensity_to_value(np.asarray(img))


def png_to_mask(b64):
    """base64 PNG -> [M, M] binary mask; white = context (1), black = target (0)."""
    try:
        img = Image.open(io.BytesIO(base64.b64decode(b64))).convert("L")
    except Exception as e:
        raise HTTPException(status_code=422, detail=f"bad mask payload: {e}") from None
    return (np.asarray(img) >= 128).astype(np.float64)


def image_to_png(values):
    """[M, M, 3] value-space array -> base64 PNG."""
    arr = value_to_intensity(np.clip(values, -1.0, 1.0)).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


class EncodeRequest(BaseModel):
    image: str
    mask: str
    seed: int = 0


class InpaintRequest(BaseModel):
    image: str
    mask: str
    overrides: dict[int, float] = Field(default_factory=dict)
    seed: int = 0
    count: int = Field(default=1, ge=1, le=16)
    truncated: bool = True


class TraverseRequest(BaseModel):
    image: str
    mask: str
    index: int
    values: list[float]
    seed: int = 0
    truncated: bool = True
    mode: str = "inpaint"  # or "reconstruct": full image, no reverse stream


def _check_shapes(model, image, mask):
    M = model.cfg.image_size
    if image.shape[:2] != (M, M):
        raise HTTPException(status_code=422,
                            detail=f"image is {image.shape[1]}x{image.shape[0]}, model wants {M}x{M}")
    if mask.shape != (M, M):
        raise HTTPException(status_code=422,
                            detail=f"mask is {mask.shape[1]}x{mask.shape[0]}, model wants {M}x{M}")


def create_app(checkpoint_path, max_workers=2):
    model, manifest = load_model(checkpoint_path)
    app = FastAPI(title="pixelfill inference service")
    sampling_slots = threading.Semaphore(max_workers)

    @app.get("/v1/model")
    def model_info():
        return {
            "preset": model.cfg.name,
            "D": model.cfg.latent_dim,
            "M": model.cfg.image_size,
            "stage": manifest.get("stage"),
            "version": __version__,
        }

    @app.post("/v1/encode")
    def encode(req: EncodeRequest):
        image, mask = png_to_image(req.image), png_to_mask(req.mask)
        _check_shapes(model, image, mask)
        rng = np.random.default_rng(req.seed)
        dist = model.encode(image[None], mask[None], rng).detach()
        return {
            "mean": dist.mean[0].tolist(),
            "variance": np.exp(dist.logvar[0]).tolist(),
        }

    @app.post("/v1/inpaint")
    def inpaint(req: InpaintRequest):
        image, mask = png_to_image(req.image), png_to_mask(req.mask)
        _check_shapes(model, image, mask)
        for idx in req.overrides:
            if not 0 <= idx < model.cfg.latent_dim:
                raise HTTPException(status_code=422,
                                    detail=f"override index {idx} out of range, D={model.cfg.latent_dim}")
        rng = np.random.default_rng(req.seed)
        with sampling_slots:
            completed, latents = run_inpaint(
                model, image, mask, rng, overrides=req.overrides,
                count=req.count, truncated=req.truncated)
        return {
            "images": [image_to_png(c) for c in completed],
            "latents": [z.tolist() for z in latents],
        }

    @app.post("/v1/traverse")
    def traverse(req: TraverseRequest):
        image, mask = png_to_image(req.image), png_to_mask(req.mask)
        _check_shapes(model, image, mask)
        if not 0 <= req.index < model.cfg.latent_dim:
            raise HTTPException(status_code=422,
                                detail=f"latent index {req.index} out of range, D={model.cfg.latent_dim}")
        if req.mode not in ("inpaint", "reconstruct"):
            raise HTTPException(status_code=422, detail=f"unknown mode {req.mode!r}")
        rng = np.random.default_rng(req.seed)
        with sampling_slots:
            grid, _ = latent_traversal(
                model, image, mask, req.index, req.values, rng,
                truncated=req.truncated, mode=req.mode)
        return {"grid": [image_to_png(c) for c in grid]}

    return app
