"""Training objective: non-saturating adversarial loss, embedding-space
cosine loss, pixel and perceptual terms, and the discriminator.
"""

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .conditioning import EmbeddingProvider

DEFAULT_CLIP_WEIGHT = {"inpaint": 0.5, "sr": 0.1, "colorize": 0.1}


@dataclass
class LossConfig:
    adv_weight: float = 0.01
    clip_weight: float = 0.5
    l1_weight: float = 1.0
    perc_weight: float = 0.01
    pixel_mode: str = "l1"  # or "smooth_l1"
    smooth_l1_delta: float = 1.0
    r1_weight: float = 0.0  # gradient penalty, off by default

    def __post_init__(self):
        if min(self.adv_weight, self.clip_weight, self.l1_weight, self.perc_weight) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.pixel_mode not in ("l1", "smooth_l1"):
            raise ValueError(f"unknown pixel mode {self.pixel_mode!r}")

    @classmethod
    def for_task(cls, task: str) -> "LossConfig":
        return cls(
            clip_weight=DEFAULT_CLIP_WEIGHT[task],
            pixel_mode="smooth_l1" if task == "colorize" else "l1",
        )

    def to_dict(self) -> dict:
        return {
            "adv_weight": self.adv_weight,
            "clip_weight": self.clip_weight,
            "l1_weight": self.l1_weight,
            "perc_weight": self.perc_weight,
            "pixel_mode": self.pixel_mode,
            "smooth_l1_delta": self.smooth_l1_delta,
            "r1_weight": self.r1_weight,
        }


@dataclass
class LossReport:
    terms: dict[str, float] = field(default_factory=dict)
    weighted: dict[str, float] = field(default_factory=dict)
    total: float = 0.0


class Discriminator(nn.Module):
    """Stride-2 conv critic ending in one logit per image."""

    def __init__(self, in_channels: int, image_size: int, base_channels: int = 64, max_channels: int = 512):
        super().__init__()
        layers = []
        ch = base_channels
        layers.append(nn.Conv2d(in_channels, ch, 3, stride=2, padding=1))
        size = image_size // 2
        while size > 4:
            nxt = min(ch * 2, max_channels)
            layers.append(nn.LeakyReLU(0.2))
            layers.append(nn.Conv2d(ch, nxt, 3, stride=2, padding=1))
            ch = nxt
            size //= 2
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(ch, 1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        feat = F.leaky_relu(self.features(image), 0.2)
        return self.head(feat.mean(dim=(2, 3))).squeeze(-1)


def adv_loss_d(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """Discriminator side: mean softplus(-real) + softplus(fake)."""
    return (F.softplus(-real_logits) + F.softplus(fake_logits)).mean()


def adv_loss_g(fake_logits: torch.Tensor) -> torch.Tensor:
    """Generator side: mean softplus(-fake)."""
    return F.softplus(-fake_logits).mean()


def clip_loss(
    restored: torch.Tensor, ground_truth: torch.Tensor, provider: EmbeddingProvider
) -> torch.Tensor:
    """1 - cosine similarity of the two images in the shared embedding space."""
    emb_r = provider.embed_image(restored)
    emb_gt = provider.embed_image(ground_truth)
    cos = F.cosine_similarity(emb_r.values, emb_gt.values, dim=0)
    return 1.0 - cos


def pixel_loss(
    restored: torch.Tensor, ground_truth: torch.Tensor, mode: str = "l1", delta: float = 1.0
) -> torch.Tensor:
    if restored.shape != ground_truth.shape:
        raise ValueError(f"shape mismatch: {tuple(restored.shape)} vs {tuple(ground_truth.shape)}")
    if mode == "l1":
        return (restored - ground_truth).abs().mean()
    if mode == "smooth_l1":
        return F.smooth_l1_loss(restored, ground_truth, beta=delta)
    raise ValueError(f"unknown pixel mode {mode!r}")


class RandomFeatureExtractor(nn.Module):
    """Frozen random-weight conv stack used as an offline stand-in for a
    pretrained perceptual backbone. Deterministic per seed."""

    name = "random-conv"

    def __init__(self, in_channels: int = 3, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        channels = [in_channels, 16, 32, 64]
        self.convs = nn.ModuleList()
        for cin, cout in zip(channels[:-1], channels[1:]):
            conv = nn.Conv2d(cin, cout, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * (cin * 9) ** -0.5)
                conv.bias.zero_()
            self.convs.append(conv)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        x = image
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return feats


class VGGFeatureExtractor(nn.Module):
    """VGG16 relu slices; requires torchvision pretrained weights."""

    name = "vgg16"
    LAYERS = (3, 8, 15, 22)  # relu1_2, relu2_2, relu3_3, relu4_3

    def __init__(self):
        super().__init__()
        from torchvision.models import vgg16, VGG16_Weights

        try:
            backbone = vgg16(weights=VGG16_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise RuntimeError(f"perceptual backbone unavailable: {exc}") from exc
        self.slices = nn.ModuleList()
        prev = 0
        for idx in self.LAYERS:
            self.slices.append(nn.Sequential(*list(backbone.features[prev : idx + 1])))
            prev = idx + 1
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        x = image
        for sl in self.slices:
            x = sl(x)
            feats.append(x)
        return feats


def make_feature_extractor(name: str, in_channels: int = 3, seed: int = 0) -> nn.Module:
    if name in ("random", "random-conv"):
        return RandomFeatureExtractor(in_channels, seed)
    if name == "vgg16":
        return VGGFeatureExtractor()
    raise ValueError(f"unknown feature extractor {name!r}")


def perceptual_loss(
    restored: torch.Tensor, ground_truth: torch.Tensor, extractor: nn.Module
) -> torch.Tensor:
    """Mean L1 distance over the extractor's declared feature layers."""
    if restored.shape != ground_truth.shape:
        raise ValueError(f"shape mismatch: {tuple(restored.shape)} vs {tuple(ground_truth.shape)}")
    batched = restored.dim() == 4
    if not batched:
        restored, ground_truth = restored[None], ground_truth[None]
    feats_r = extractor(restored)
    feats_gt = extractor(ground_truth)
    losses = [(fr - fg).abs().mean() for fr, fg in zip(feats_r, feats_gt)]
    return torch.stack(losses).mean()


def total_g_loss(
    adv: torch.Tensor,
    clip: torch.Tensor,
    pixel: torch.Tensor,
    perc: torch.Tensor,
    config: LossConfig,
) -> tuple[torch.Tensor, LossReport]:
    """Weighted sum of the four generator-side terms."""
    weighted = {
        "adv": config.adv_weight * adv,
        "clip": config.clip_weight * clip,
        "pixel": config.l1_weight * pixel,
        "perc": config.perc_weight * perc,
    }
    total = weighted["adv"] + weighted["clip"] + weighted["pixel"] + weighted["perc"]
    report = LossReport(
        terms={
            "adv": adv.detach().item(),
            "clip": clip.detach().item(),
            "pixel": pixel.detach().item(),
            "perc": perc.detach().item(),
        },
        weighted={k: v.detach().item() for k, v in weighted.items()},
        total=total.detach().item(),
    )
    return total, report
