"""Encoder, style-modulated generator, and strength-controlled fusion.

The encoder pulls a factor-2 feature pyramid out of the degraded image;
its coarsest map seeds the generator instead of a learned constant. At
every level the generator output is blended with the matching encoder
feature through channel-wise weight pairs derived from a scalar
strength factor, then upsampled and re-styled until the input
resolution is reached.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from .conditioning import StyleMapper
from .degradations import SR_FACTORS

FUSION_EPS = 1e-8
DEMOD_EPS = 1e-8

TASK_IO = {
    # task: (input channels, output channels, default training size)
    "inpaint": (4, 3, 256),
    "sr": (3, 3, 512),
    "colorize": (1, 2, 256),
}


@dataclass(frozen=True)
class GeneratorSpec:
    """Architecture layout: level count, channel schedule, task I/O."""

    task: str
    levels: int = 4
    base_channels: int = 64
    max_channels: int = 512
    condition_dim: int = 512
    image_size: int = 0  # 0 = task default

    def __post_init__(self):
        if self.task not in TASK_IO:
            raise ValueError(f"unknown task {self.task!r}")
        if self.levels < 1 or self.base_channels < 1:
            raise ValueError("levels and base_channels must be positive")
        if self.image_size == 0:
            object.__setattr__(self, "image_size", TASK_IO[self.task][2])

    @property
    def in_channels(self) -> int:
        return TASK_IO[self.task][0]

    @property
    def out_channels(self) -> int:
        return TASK_IO[self.task][1]

    def encoder_channels(self, level: int) -> int:
        """Channel width of encoder feature at pyramid level 0..levels."""
        return min(self.base_channels * 2**level, self.max_channels)

    def generator_channels(self, level: int) -> int:
        """Width at generator level i (0 = coarsest); mirrors the encoder."""
        return self.encoder_channels(self.levels - level)

    @property
    def style_dims(self) -> list[int]:
        """Per-StyleConv style lengths, in application order."""
        dims = [self.encoder_channels(self.levels)]
        for i in range(1, self.levels + 1):
            dims.append(self.generator_channels(i - 1))
            dims.append(self.generator_channels(i))
        return dims

    @property
    def num_style_codes(self) -> int:
        return 2 * self.levels + 1

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "levels": self.levels,
            "base_channels": self.base_channels,
            "max_channels": self.max_channels,
            "condition_dim": self.condition_dim,
            "image_size": self.image_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(**d)


@dataclass
class FeaturePyramid:
    """Encoder features, finest (level 0) to coarsest (level `levels`)."""

    levels: list[torch.Tensor] = field(default_factory=list)

    def __post_init__(self):
        for k in range(1, len(self.levels)):
            prev, cur = self.levels[k - 1], self.levels[k]
            if prev.shape[-1] != 2 * cur.shape[-1] or prev.shape[-2] != 2 * cur.shape[-2]:
                raise ValueError(
                    f"pyramid level {k} must halve spatial size: "
                    f"{tuple(prev.shape[-2:])} -> {tuple(cur.shape[-2:])}"
                )

    @property
    def coarsest(self) -> torch.Tensor:
        return self.levels[-1]


@dataclass(frozen=True)
class StrengthFactor:
    """Scalar controlling how strongly encoder features reach the output."""

    value: float
    mode: str = "encoder_predicted"  # or "explicit_scale"

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"normalized strength must be in [0, 1], got {self.value}")


def normalize_sr_factor(factor: int) -> float:
    """Map a downscale factor to the bounded strength input log2(f)/6."""
    if factor not in SR_FACTORS and factor != 1:
        raise ValueError(f"SR factor must be one of {SR_FACTORS}, got {factor}")
    return math.log2(factor) / 6.0


class StyleConv(nn.Module):
    """Convolution modulated per input channel by a style vector.

    The kernel is scaled by the style along the input-channel axis, then
    renormalized per output channel (demodulation) so output standard
    deviation roughly matches the input's regardless of style scale.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = kernel_size // 2
        fan_in = in_channels * kernel_size**2
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, kernel_size, kernel_size) / math.sqrt(fan_in))
        self.bias = nn.Parameter(torch.zeros(out_channels))

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        if style.shape[-1] != self.in_channels:
            raise ValueError(
                f"style length {style.shape[-1]} does not match input channels {self.in_channels}"
            )
        batch = x.shape[0]
        style = style.reshape(batch, 1, self.in_channels, 1, 1)
        weight = self.weight[None] * style
        demod = torch.rsqrt(weight.pow(2).sum(dim=(2, 3, 4)) + DEMOD_EPS)
        weight = weight * demod.reshape(batch, self.out_channels, 1, 1, 1)
        # grouped conv runs all batch items with their own modulated kernel
        x = x.reshape(1, batch * self.in_channels, *x.shape[-2:])
        weight = weight.reshape(batch * self.out_channels, self.in_channels, self.kernel_size, self.kernel_size)
        out = F.conv2d(x, weight, padding=self.padding, groups=batch)
        out = out.reshape(batch, self.out_channels, *out.shape[-2:])
        return out + self.bias.reshape(1, -1, 1, 1)


def normalize_fusion_weights(
    alpha_raw_enc: torch.Tensor, alpha_raw_gen: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Turn a raw weight pair into positive, channel-wise unit-L2 weights."""
    denom = torch.sqrt(alpha_raw_enc**2 + alpha_raw_gen**2 + FUSION_EPS)
    return alpha_raw_enc.abs() / denom, alpha_raw_gen.abs() / denom


class FusionBlock(nn.Module):
    """Blend an encoder feature (via a 1x1 adjustment conv) with a generated one."""

    def __init__(self, enc_channels: int, gen_channels: int):
        super().__init__()
        self.adjust = nn.Conv2d(enc_channels, gen_channels, kernel_size=1)

    def forward(
        self,
        enc_feat: torch.Tensor,
        gen_feat: torch.Tensor,
        alpha_pair: tuple[torch.Tensor, torch.Tensor],
        level: int = -1,
    ) -> torch.Tensor:
        if enc_feat.shape[-2:] != gen_feat.shape[-2:]:
            raise ValueError(
                f"fusion at level {level}: encoder {tuple(enc_feat.shape[-2:])} vs "
                f"generator {tuple(gen_feat.shape[-2:])} spatial mismatch"
            )
        w_enc, w_gen = normalize_fusion_weights(*alpha_pair)
        w_enc = w_enc.reshape(*w_enc.shape, 1, 1)
        w_gen = w_gen.reshape(*w_gen.shape, 1, 1)
        return w_enc * self.adjust(enc_feat) + w_gen * gen_feat


class StrengthMLP(nn.Module):
    """Expand the scalar strength factor into raw per-level weight pairs."""

    def __init__(self, spec: GeneratorSpec, hidden: int = 64):
        super().__init__()
        self.spec = spec
        self.pair_dims = [spec.generator_channels(i) for i in range(spec.levels + 1)]
        total = 2 * sum(self.pair_dims)
        self.net = nn.Sequential(
            nn.Linear(1, hidden),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden, total),
        )
        nn.init.ones_(self.net[-1].bias)

    def forward(self, strength: torch.Tensor) -> list[tuple[torch.Tensor, torch.Tensor]]:
        flat = self.net(strength.reshape(-1, 1))
        pairs = []
        offset = 0
        for dim in self.pair_dims:
            pairs.append((flat[:, offset : offset + dim], flat[:, offset + dim : offset + 2 * dim]))
            offset += 2 * dim
        return pairs


class Encoder(nn.Module):
    """Plain stride-2 CNN producing the feature pyramid and a strength guess."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        self.stem = nn.Conv2d(spec.in_channels, spec.encoder_channels(0), 3, padding=1)
        self.downs = nn.ModuleList(
            nn.Conv2d(spec.encoder_channels(k - 1), spec.encoder_channels(k), 3, stride=2, padding=1)
            for k in range(1, spec.levels + 1)
        )
        top = spec.encoder_channels(spec.levels)
        self.strength_head = nn.Sequential(nn.Linear(top, 64), nn.LeakyReLU(0.2), nn.Linear(64, 1))

    def forward(self, degraded: torch.Tensor) -> tuple[FeaturePyramid, torch.Tensor]:
        if degraded.shape[1] != self.spec.in_channels:
            raise ValueError(
                f"task {self.spec.task!r} expects {self.spec.in_channels}-channel input, "
                f"got {degraded.shape[1]}"
            )
        feat = F.leaky_relu(self.stem(degraded), 0.2)
        levels = [feat]
        for down in self.downs:
            feat = F.leaky_relu(down(feat), 0.2)
            levels.append(feat)
        pooled = feat.mean(dim=(2, 3))
        strength_pred = torch.sigmoid(self.strength_head(pooled)).squeeze(-1)
        return FeaturePyramid(levels), strength_pred


class Generator(nn.Module):
    """Runs the coarse-to-fine styled recursion with per-level fusion."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        self.initial = StyleConv(spec.encoder_channels(spec.levels), spec.generator_channels(0))
        self.blocks = nn.ModuleList()
        for i in range(1, spec.levels + 1):
            self.blocks.append(
                nn.ModuleList(
                    [
                        StyleConv(spec.generator_channels(i - 1), spec.generator_channels(i)),
                        StyleConv(spec.generator_channels(i), spec.generator_channels(i)),
                    ]
                )
            )
        self.fusions = nn.ModuleList(
            FusionBlock(spec.encoder_channels(spec.levels - i), spec.generator_channels(i))
            for i in range(spec.levels + 1)
        )
        self.to_out = nn.Conv2d(spec.generator_channels(spec.levels), spec.out_channels, 3, padding=1)

    def forward(
        self,
        pyramid: FeaturePyramid,
        style_codes: list[torch.Tensor],
        fusion_pairs: list[tuple[torch.Tensor, torch.Tensor]],
    ) -> torch.Tensor:
        spec = self.spec
        if len(style_codes) != spec.num_style_codes:
            raise ValueError(f"expected {spec.num_style_codes} style codes, got {len(style_codes)}")
        if len(pyramid.levels) != spec.levels + 1:
            raise ValueError(f"expected {spec.levels + 1} pyramid levels, got {len(pyramid.levels)}")
        if len(fusion_pairs) != spec.levels + 1:
            raise ValueError(f"expected {spec.levels + 1} fusion pairs, got {len(fusion_pairs)}")

        gen = F.leaky_relu(self.initial(pyramid.coarsest, style_codes[0]), 0.2)
        x = self.fusions[0](pyramid.coarsest, gen, fusion_pairs[0], level=0)
        for i in range(1, spec.levels + 1):
            up = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            conv_a, conv_b = self.blocks[i - 1]
            gen = F.leaky_relu(conv_a(up, style_codes[2 * i - 1]), 0.2)
            gen = F.leaky_relu(conv_b(gen, style_codes[2 * i]), 0.2)
            x = self.fusions[i](pyramid.levels[spec.levels - i], gen, fusion_pairs[i], level=i)
        out = torch.tanh(self.to_out(x))
        if spec.task == "colorize":
            return out  # ab planes in [-1, 1]
        return (out + 1.0) / 2.0  # RGB in [0, 1]


class RestorationModel(nn.Module):
    """End-to-end network: encode, map condition to styles, fuse, generate."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        self.encoder = Encoder(spec)
        self.mapper = StyleMapper(spec.condition_dim, spec.style_dims)
        self.strength_mlp = StrengthMLP(spec)
        self.generator = Generator(spec)

    def forward(
        self,
        degraded: torch.Tensor,
        condition: torch.Tensor,
        strength_override: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        if condition.shape[-1] != self.spec.condition_dim:
            raise ValueError(
                f"condition dim {condition.shape[-1]} does not match spec {self.spec.condition_dim}"
            )
        if degraded.shape[1] == self.spec.in_channels and self.spec.task == "colorize":
            degraded = degraded / 100.0  # L plane to [0, 1]
        condition = condition / condition.norm(dim=-1, keepdim=True).clamp(min=1e-12)
        pyramid, strength_pred = self.encoder(degraded)
        strength = strength_pred if strength_override is None else strength_override
        styles = self.mapper(condition)
        pairs = self.strength_mlp(strength)
        return self.generator(pyramid, styles, pairs)

    @torch.no_grad()
    def restore(
        self,
        degraded: torch.Tensor,
        condition: torch.Tensor,
        strength_override: Optional[float] = None,
    ) -> torch.Tensor:
        """Single-image inference; accepts CxHxW, returns CxHxW."""
        batched = degraded.dim() == 4
        if not batched:
            degraded = degraded[None]
        if condition.dim() == 1:
            condition = condition[None].expand(degraded.shape[0], -1)
        override = None
        if strength_override is not None:
            override = torch.full((degraded.shape[0],), float(strength_override), dtype=degraded.dtype)
        out = self.forward(degraded, condition, override)
        return out if batched else out[0]

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        return {
            "encoder": list(self.encoder.parameters()),
            "generator": list(self.generator.parameters()),
            "mapper": list(self.mapper.parameters()),
            "strength_mlp": list(self.strength_mlp.parameters()),
        }
