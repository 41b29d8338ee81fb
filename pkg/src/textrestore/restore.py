"""Task-aware glue between raw network outputs and displayable RGB,
plus PNG (de)serialization used by the CLI and the HTTP service."""

import io

import numpy as np
import torch
from PIL import Image

from .color import lab_to_rgb
from .degradations import AB_SCALE


def png_to_tensor(data: bytes) -> torch.Tensor:
    """Decode PNG bytes into a 3xHxW RGB tensor in [0, 1]."""
    img = Image.open(io.BytesIO(data)).convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def tensor_to_png(image: torch.Tensor) -> bytes:
    """Encode a 3xHxW RGB tensor in [0, 1] as PNG bytes (deterministic)."""
    arr = (image.clamp(0, 1) * 255.0).round().byte().permute(1, 2, 0).cpu().numpy()
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def output_to_rgb(task: str, degraded: torch.Tensor, output: torch.Tensor) -> torch.Tensor:
    """Convert a network output to a 3xHxW RGB image in [0, 1].

    For colorization the output holds scaled ab planes; they are joined
    with the degraded input's L plane and converted out of Lab space.
    """
    if task in ("inpaint", "sr"):
        return output.clamp(0.0, 1.0)
    if task == "colorize":
        lum = degraded[0:1]
        lab = torch.cat([lum, output * AB_SCALE], dim=0)
        return lab_to_rgb(lab)
    raise ValueError(f"unknown task {task!r}")
