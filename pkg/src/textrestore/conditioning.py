"""Condition embeddings and their mapping to per-layer style vectors.

A condition is a single vector in the shared text/image embedding space
of a contrastive vision-language encoder. At inference it comes from a
text prompt, during training from the ground-truth image, so no text
labels are needed. A blend of the two controls edit intensity.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import torch
from torch import nn

EMBED_SOURCES = ("image", "text", "interpolated")


class EmbeddingBackendMissing(RuntimeError):
    """Raised when the requested embedding backend cannot be loaded."""


@dataclass(frozen=True)
class EmbeddingProviderSpec:
    name: str
    embedding_dim: int
    preprocessing: str

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "embedding_dim": self.embedding_dim,
            "preprocessing": self.preprocessing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingProviderSpec":
        return cls(d["name"], int(d["embedding_dim"]), d["preprocessing"])


@dataclass
class ConditionEmbedding:
    values: torch.Tensor
    source: str

    def __post_init__(self):
        if self.source not in EMBED_SOURCES:
            raise ValueError(f"unknown embedding source {self.source!r}")
        if self.values.dim() != 1:
            raise ValueError("embedding values must be a 1-D vector")
        if not torch.isfinite(self.values).all():
            raise ValueError("embedding contains non-finite entries")

    def __len__(self) -> int:
        return self.values.shape[0]


class EmbeddingProvider(Protocol):
    spec: EmbeddingProviderSpec

    def embed_image(self, image: torch.Tensor) -> ConditionEmbedding: ...

    def embed_text(self, prompt: str) -> ConditionEmbedding: ...


class StubEmbeddingProvider:
    """Deterministic offline stand-in for the pretrained encoder.

    Embeddings are hash-seeded pseudo-random unit vectors, so identical
    inputs always map to identical vectors and distinct inputs are
    almost surely distinct. Carries no semantics; exists so the whole
    pipeline runs with no model download.
    """

    def __init__(self, embedding_dim: int = 512):
        self.spec = EmbeddingProviderSpec(
            name="stub-hash", embedding_dim=embedding_dim, preprocessing="none"
        )

    def _from_bytes(self, payload: bytes, source: str) -> ConditionEmbedding:
        digest = hashlib.sha256(payload).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.spec.embedding_dim)
        vec /= np.linalg.norm(vec)
        return ConditionEmbedding(torch.from_numpy(vec).float(), source)

    def embed_image(self, image: torch.Tensor) -> ConditionEmbedding:
        if image.dim() != 3 or image.shape[0] != 3:
            raise ValueError(f"expected 3xHxW RGB image, got shape {tuple(image.shape)}")
        payload = image.detach().cpu().to(torch.float32).numpy().tobytes()
        return self._from_bytes(b"image:" + payload, "image")

    def embed_text(self, prompt: str) -> ConditionEmbedding:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        return self._from_bytes(b"text:" + prompt.encode("utf-8"), "text")


class ClipEmbeddingProvider:
    """ViT-B/32 contrastive encoder via huggingface transformers.

    Requires the pretrained weights to be available locally or
    downloadable; otherwise raises EmbeddingBackendMissing.
    """

    MODEL_ID = "openai/clip-vit-base-patch32"

    def __init__(self):
        try:
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:  # pragma: no cover
            raise EmbeddingBackendMissing("embedding backend missing: transformers not installed") from exc
        try:
            self._model = CLIPModel.from_pretrained(self.MODEL_ID)
            self._processor = CLIPProcessor.from_pretrained(self.MODEL_ID)
        except Exception as exc:
            raise EmbeddingBackendMissing(
                f"embedding backend missing: could not load {self.MODEL_ID} ({exc})"
            ) from exc
        self._model.eval()
        self.spec = EmbeddingProviderSpec(
            name="clip-vit-b32",
            embedding_dim=int(self._model.config.projection_dim),
            preprocessing="resize 224, center crop, CLIP mean/std normalize",
        )

    def embed_image(self, image: torch.Tensor) -> ConditionEmbedding:
        if image.dim() != 3 or image.shape[0] != 3:
            raise ValueError(f"expected 3xHxW RGB image, got shape {tuple(image.shape)}")
        arr = (image.detach().clamp(0, 1) * 255).byte().permute(1, 2, 0).cpu().numpy()
        inputs = self._processor(images=arr, return_tensors="pt")
        with torch.no_grad():
            feats = self._model.get_image_features(**inputs)[0]
        return ConditionEmbedding(feats.float(), "image")

    def embed_text(self, prompt: str) -> ConditionEmbedding:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        inputs = self._processor(text=[prompt], return_tensors="pt", padding=True)
        with torch.no_grad():
            feats = self._model.get_text_features(
                input_ids=inputs["input_ids"], attention_mask=inputs["attention_mask"]
            )[0]
        return ConditionEmbedding(feats.float(), "text")


def make_provider(name: str, embedding_dim: int = 512) -> EmbeddingProvider:
    if name in ("stub-hash", "stub"):
        return StubEmbeddingProvider(embedding_dim)
    if name in ("clip-vit-b32", "clip"):
        return ClipEmbeddingProvider()
    raise ValueError(f"unknown embedding provider {name!r}")


def interpolate_condition(
    text_emb: ConditionEmbedding, image_emb: ConditionEmbedding, beta: float
) -> ConditionEmbedding:
    """Convex blend: beta * text + (1 - beta) * image.

    beta = 1 is a pure text condition, beta = 0 reproduces the image
    condition exactly.
    """
    if len(text_emb) != len(image_emb):
        raise ValueError(f"embedding length mismatch: {len(text_emb)} vs {len(image_emb)}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    if beta == 0.0:
        return ConditionEmbedding(image_emb.values.clone(), "image")
    if beta == 1.0:
        return ConditionEmbedding(text_emb.values.clone(), "text")
    values = beta * text_emb.values + (1.0 - beta) * image_emb.values
    return ConditionEmbedding(values, "interpolated")


@dataclass
class StyleCode:
    """Per-layer style vectors: [level-0 code] + two per upsampling level."""

    level_codes: list[torch.Tensor] = field(default_factory=list)

    def __post_init__(self):
        for code in self.level_codes:
            if not torch.isfinite(code).all():
                raise ValueError("style code contains non-finite entries")

    def __len__(self) -> int:
        return len(self.level_codes)


class StyleMapper(nn.Module):
    """Single affine layer mapping a condition vector to all style slices.

    The flat output is split into one vector per StyleConv layer; slice
    order is coarse to fine. Bias initializes to 1 so modulation starts
    neutral.
    """

    def __init__(self, condition_dim: int, style_dims: list[int]):
        super().__init__()
        self.condition_dim = condition_dim
        self.style_dims = list(style_dims)
        self.linear = nn.Linear(condition_dim, sum(style_dims))
        nn.init.normal_(self.linear.weight, std=1.0 / condition_dim**0.5)
        nn.init.ones_(self.linear.bias)

    def forward(self, condition: torch.Tensor) -> list[torch.Tensor]:
        if condition.shape[-1] != self.condition_dim:
            raise ValueError(
                f"condition length {condition.shape[-1]} does not match "
                f"mapper input width {self.condition_dim}"
            )
        flat = self.linear(condition)
        return list(flat.split(self.style_dims, dim=-1))

    def map_condition(self, emb: ConditionEmbedding) -> StyleCode:
        return StyleCode(self.forward(emb.values))


def normalize_condition(values: torch.Tensor) -> torch.Tensor:
    """L2-normalize a condition vector (scale-free conditioning)."""
    return values / values.norm().clamp(min=1e-12)
