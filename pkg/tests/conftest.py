import numpy as np
import pytest
import torch
from PIL import Image

from textrestore.conditioning import StubEmbeddingProvider
from textrestore.generator import GeneratorSpec, RestorationModel


def tiny_spec(task: str, size: int = 32) -> GeneratorSpec:
    return GeneratorSpec(task, levels=2, base_channels=8, max_channels=32, image_size=size)


@pytest.fixture
def provider():
    return StubEmbeddingProvider()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_image(seed: int = 0, size: int = 32, channels: int = 3) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(channels, size, size, generator=gen)


def tiny_model(task: str, size: int = 32, seed: int = 0) -> RestorationModel:
    torch.manual_seed(seed)
    return RestorationModel(tiny_spec(task, size))


def write_toy_dataset(root, n=4, size=32, captions=None, seed=0):
    """Write n random PNGs and a manifest (with optional captions)."""
    import json

    root.mkdir(parents=True, exist_ok=True)
    gen = np.random.default_rng(seed)
    lines = []
    for i in range(n):
        arr = (gen.random((size, size, 3)) * 255).astype("uint8")
        name = f"img_{i:03d}.png"
        Image.fromarray(arr).save(root / name)
        entry = {"path": name, "split": "train"}
        if captions is not None:
            entry["captions"] = captions[i % len(captions)]
        lines.append(json.dumps(entry))
    (root / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    return root
