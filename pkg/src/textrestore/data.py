"""Dataset directory convention and batch assembly.

A dataset is a folder of RGB images plus a line-delimited JSON manifest;
each line holds {"path": ..., "split": ..., "captions": [...]} with
captions optional. Batches carry the degraded inputs, targets, and
precomputed image-embedding conditions.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image

from .conditioning import EmbeddingProvider
from .degradations import (
    SR_FACTORS,
    StrokeConfig,
    TaskSample,
    degrade_gray,
    degrade_inpaint,
    degrade_sr,
    sample_freeform_mask,
)
from .generator import normalize_sr_factor

log = logging.getLogger(__name__)

MAX_CONSECUTIVE_FAILURES = 10


@dataclass
class DatasetRecord:
    path: str
    split: str = "train"
    captions: list[str] = field(default_factory=list)


def load_manifest(manifest_path: str | Path) -> list[DatasetRecord]:
    records = []
    with open(manifest_path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            records.append(
                DatasetRecord(d["path"], d.get("split", "train"), list(d.get("captions", [])))
            )
    return records


def write_manifest(records: list[DatasetRecord], manifest_path: str | Path) -> None:
    with open(manifest_path, "w") as fh:
        for rec in records:
            fh.write(
                json.dumps({"path": rec.path, "split": rec.split, "captions": rec.captions}) + "\n"
            )


class ImageDataset:
    """Folder of images addressed through a manifest, resized on load."""

    def __init__(
        self,
        root: str | Path,
        image_size: int,
        split: Optional[str] = None,
        manifest: str = "manifest.jsonl",
    ):
        self.root = Path(root)
        self.image_size = image_size
        manifest_path = self.root / manifest
        if manifest_path.exists():
            records = load_manifest(manifest_path)
        else:
            # fall back to every image in the folder
            exts = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}
            records = [
                DatasetRecord(p.name)
                for p in sorted(self.root.iterdir())
                if p.suffix.lower() in exts
            ]
        if split is not None:
            records = [r for r in records if r.split == split]
        if not records:
            raise ValueError(f"dataset at {self.root} has no records (split={split!r})")
        self.records = records

    def __len__(self) -> int:
        return len(self.records)

    def load_image(self, index: int) -> torch.Tensor:
        rec = self.records[index]
        img = Image.open(self.root / rec.path).convert("RGB")
        if img.size != (self.image_size, self.image_size):
            img = img.resize((self.image_size, self.image_size), Image.BICUBIC)
        arr = np.asarray(img, dtype=np.float32) / 255.0
        return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


@dataclass
class Batch:
    task: str
    degraded: torch.Tensor
    target: torch.Tensor
    ground_truth: torch.Tensor
    conditions: torch.Tensor
    strength_override: Optional[torch.Tensor]
    samples: list[TaskSample]


def degrade_for_task(
    image: torch.Tensor,
    task: str,
    rng: np.random.Generator,
    mask_config: StrokeConfig = StrokeConfig(),
) -> TaskSample:
    if task == "inpaint":
        mask = sample_freeform_mask(int(rng.integers(2**31)), image.shape[-1], mask_config)
        return degrade_inpaint(image, mask)
    if task == "sr":
        # small test images cannot take every declared factor
        usable = [f for f in SR_FACTORS if image.shape[-1] % f == 0]
        factor = int(rng.choice(usable))
        return degrade_sr(image, factor)
    if task == "colorize":
        return degrade_gray(image)
    raise ValueError(f"unknown task {task!r}")


def batch_from_samples(
    samples: list[TaskSample], provider: EmbeddingProvider, task: str
) -> Batch:
    degraded = torch.stack([s.degraded for s in samples])
    ground_truth = torch.stack([s.ground_truth for s in samples])
    if task == "colorize":
        target = torch.stack([s.color_target for s in samples])
    else:
        target = ground_truth
    # training conditions are always image embeddings of the ground truth
    conditions = torch.stack([provider.embed_image(s.ground_truth).values for s in samples])
    strength = None
    if task == "sr":
        strength = torch.tensor([normalize_sr_factor(s.scale) for s in samples], dtype=torch.float32)
    return Batch(task, degraded, target, ground_truth, conditions, strength, samples)


def make_batch(
    dataset: ImageDataset,
    task: str,
    rng: np.random.Generator,
    batch_size: int,
    provider: EmbeddingProvider,
    mask_config: StrokeConfig = StrokeConfig(),
) -> Batch:
    """Sample, degrade, and embed a training batch. Unreadable images are
    skipped with a hard cap on consecutive failures."""
    samples: list[TaskSample] = []
    failures = 0
    while len(samples) < batch_size:
        index = int(rng.integers(len(dataset)))
        try:
            image = dataset.load_image(index)
        except Exception as exc:
            failures += 1
            log.warning("skipping unreadable image %s: %s", dataset.records[index].path, exc)
            if failures >= MAX_CONSECUTIVE_FAILURES:
                raise RuntimeError(
                    f"{failures} consecutive unreadable images; giving up"
                ) from exc
            continue
        failures = 0
        samples.append(degrade_for_task(image, task, rng, mask_config))
    return batch_from_samples(samples, provider, task)
