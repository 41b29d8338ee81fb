"""Degradation pipelines for the three restoration tasks.

Each degradation maps a ground-truth RGB image to a `TaskSample` holding
the degraded input the network sees:

  - inpaint:  4xHxW = [masked RGB, mask]
  - sr:       3xHxW bicubic down/up-sampled
  - colorize: 1xHxW Lab L-plane (units 0..100); target is the ab planes
              scaled to [-1, 1] (divide by 128)
"""

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .color import rgb_to_lab

TASKS = ("inpaint", "sr", "colorize")
SR_FACTORS = (4, 8, 16, 32, 64)

AB_SCALE = 128.0


@dataclass(frozen=True)
class StrokeConfig:
    """Procedural free-form mask parameters (brush strokes + rectangles)."""

    num_strokes: tuple[int, int] = (1, 4)
    num_rects: tuple[int, int] = (0, 2)
    stroke_steps: tuple[int, int] = (4, 16)
    brush_radius: tuple[float, float] = (0.02, 0.08)  # fraction of image side
    rect_side: tuple[float, float] = (0.05, 0.3)
    hole_fraction: tuple[float, float] = (0.0, 0.95)
    max_resamples: int = 50


@dataclass
class TaskSample:
    task: str
    degraded: torch.Tensor
    ground_truth: torch.Tensor
    mask: Optional[torch.Tensor] = None
    scale: Optional[int] = None
    color_target: Optional[torch.Tensor] = None


def _paint_disc(canvas: np.ndarray, cy: float, cx: float, radius: float) -> None:
    h, w = canvas.shape
    y0, y1 = max(0, int(cy - radius)), min(h, int(cy + radius) + 2)
    x0, x1 = max(0, int(cx - radius)), min(w, int(cx + radius) + 2)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    hit = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    canvas[y0:y1, x0:x1][hit] = 0.0


def sample_freeform_mask(
    rng_seed: int, size: int, stroke_config: StrokeConfig = StrokeConfig()
) -> torch.Tensor:
    """Draw a random free-form hole mask (1 = keep, 0 = hole), 1xHxW.

    Deterministic per seed. Resamples until the hole fraction lands in
    the configured range; raises if the bounds are unachievable.
    """
    if size <= 0:
        raise ValueError("mask size must be positive")
    lo, hi = stroke_config.hole_fraction
    if not (0.0 <= lo <= hi <= 0.95):
        raise ValueError(f"hole fraction bounds must satisfy 0 <= lo <= hi <= 0.95, got ({lo}, {hi})")
    rng = np.random.default_rng(rng_seed)
    for _ in range(stroke_config.max_resamples):
        canvas = np.ones((size, size), dtype=np.float32)
        n_strokes = rng.integers(stroke_config.num_strokes[0], stroke_config.num_strokes[1] + 1)
        for _ in range(n_strokes):
            y = rng.uniform(0, size)
            x = rng.uniform(0, size)
            angle = rng.uniform(0, 2 * math.pi)
            radius = rng.uniform(*stroke_config.brush_radius) * size
            steps = rng.integers(stroke_config.stroke_steps[0], stroke_config.stroke_steps[1] + 1)
            for _ in range(steps):
                _paint_disc(canvas, y, x, radius)
                angle += rng.uniform(-0.8, 0.8)
                step_len = rng.uniform(0.5, 2.0) * radius
                y = float(np.clip(y + step_len * math.sin(angle), 0, size - 1))
                x = float(np.clip(x + step_len * math.cos(angle), 0, size - 1))
        n_rects = rng.integers(stroke_config.num_rects[0], stroke_config.num_rects[1] + 1)
        for _ in range(n_rects):
            rh = int(rng.uniform(*stroke_config.rect_side) * size)
            rw = int(rng.uniform(*stroke_config.rect_side) * size)
            y0 = int(rng.uniform(0, max(1, size - rh)))
            x0 = int(rng.uniform(0, max(1, size - rw)))
            canvas[y0 : y0 + rh, x0 : x0 + rw] = 0.0
        frac = 1.0 - canvas.mean()
        if lo <= frac <= hi:
            return torch.from_numpy(canvas)[None]
    raise ValueError(
        f"could not sample a mask with hole fraction in [{lo}, {hi}] "
        f"after {stroke_config.max_resamples} attempts"
    )


def degrade_inpaint(ground_truth: torch.Tensor, mask: torch.Tensor) -> TaskSample:
    """Mask out ground truth and stack the mask as a fourth channel."""
    if ground_truth.dim() != 3 or ground_truth.shape[0] != 3:
        raise ValueError(f"expected 3xHxW RGB image, got shape {tuple(ground_truth.shape)}")
    if mask.shape[-2:] != ground_truth.shape[-2:]:
        raise ValueError(
            f"mask spatial size {tuple(mask.shape[-2:])} does not match "
            f"image {tuple(ground_truth.shape[-2:])}"
        )
    mask = mask.reshape(1, *ground_truth.shape[-2:]).to(ground_truth.dtype)
    degraded = torch.cat([ground_truth * mask, mask], dim=0)
    return TaskSample("inpaint", degraded, ground_truth, mask=mask)


def degrade_sr(ground_truth: torch.Tensor, factor: int) -> TaskSample:
    """Bicubic downsample by `factor` then upsample back to the original size."""
    if ground_truth.dim() != 3 or ground_truth.shape[0] != 3:
        raise ValueError(f"expected 3xHxW RGB image, got shape {tuple(ground_truth.shape)}")
    h, w = ground_truth.shape[-2:]
    if factor < 1 or h % factor or w % factor:
        raise ValueError(f"factor {factor} must divide image size {h}x{w}")
    if factor == 1:
        return TaskSample("sr", ground_truth.clone(), ground_truth, scale=1)
    x = ground_truth[None]
    down = F.interpolate(x, scale_factor=1.0 / factor, mode="bicubic", align_corners=False, antialias=True)
    up = F.interpolate(down, size=(h, w), mode="bicubic", align_corners=False)
    return TaskSample("sr", up[0].clamp(0.0, 1.0), ground_truth, scale=factor)


def degrade_gray(ground_truth: torch.Tensor) -> TaskSample:
    """Drop color: input is the Lab L-plane, target the ab planes in [-1, 1]."""
    if ground_truth.dim() != 3 or ground_truth.shape[0] != 3:
        raise ValueError(f"expected 3xHxW RGB image, got shape {tuple(ground_truth.shape)}")
    lab = rgb_to_lab(ground_truth)
    return TaskSample(
        "colorize",
        lab[0:1],
        ground_truth,
        color_target=lab[1:3] / AB_SCALE,
    )


def load_mask_png(path: str | Path) -> torch.Tensor:
    """Read an 8-bit mask PNG (255 = keep) into a binary 1xHxW tensor."""
    img = Image.open(path).convert("L")
    arr = np.asarray(img, dtype=np.float32)
    return torch.from_numpy((arr >= 128).astype(np.float32))[None]


def encode_mask_png(mask: torch.Tensor) -> bytes:
    """Encode a binary 1xHxW mask as a canonical 8-bit grayscale PNG.

    The byte layout is fixed (single IDAT, zlib stream made of stored deflate
    blocks, filter 0 on every row) so any compliant encoder of the same
    canonical form produces identical bytes for identical masks. The studio
    mask editor emits this exact layout, which is what makes export/import/
    re-export round trips byte-identical across tools.
    """
    arr = (mask.reshape(mask.shape[-2:]).numpy() >= 0.5).astype(np.uint8) * 255
    height, width = arr.shape
    raw = b"".join(b"\x00" + arr[row].tobytes() for row in range(height))

    def chunk(tag: bytes, body: bytes) -> bytes:
        return (
            struct.pack(">I", len(body))
            + tag
            + body
            + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)
        )

    # zlib container with stored (uncompressed) deflate blocks
    stream = bytearray(b"\x78\x01")
    for off in range(0, len(raw), 65535):
        piece = raw[off : off + 65535]
        final = 1 if off + 65535 >= len(raw) else 0
        stream += bytes([final]) + struct.pack("<HH", len(piece), len(piece) ^ 0xFFFF) + piece
    stream += struct.pack(">I", zlib.adler32(raw) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", bytes(stream))
        + chunk(b"IEND", b"")
    )


def save_mask_png(mask: torch.Tensor, path: str | Path) -> None:
    """Write a binary 1xHxW mask to an 8-bit PNG (255 = keep)."""
    Path(path).write_bytes(encode_mask_png(mask))
