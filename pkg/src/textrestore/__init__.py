"""Text-conditioned image restoration: inpainting, super-resolution,
and colorization steered by prompts through a shared text-image
embedding space."""

from .conditioning import (
    ConditionEmbedding,
    EmbeddingProviderSpec,
    StubEmbeddingProvider,
    StyleCode,
    StyleMapper,
    interpolate_condition,
    make_provider,
)
from .degradations import (
    StrokeConfig,
    TaskSample,
    degrade_gray,
    degrade_inpaint,
    degrade_sr,
    sample_freeform_mask,
)
from .generator import (
    FeaturePyramid,
    GeneratorSpec,
    RestorationModel,
    StrengthFactor,
    StyleConv,
    normalize_fusion_weights,
    normalize_sr_factor,
)
from .losses import LossConfig, adv_loss_d, adv_loss_g, clip_loss, pixel_loss, total_g_loss
from .metrics import psnr, ssim
from .training import TrainConfig, Trainer, load_model

__version__ = "0.1.0"

__all__ = [
    "ConditionEmbedding",
    "EmbeddingProviderSpec",
    "StubEmbeddingProvider",
    "StyleCode",
    "StyleMapper",
    "interpolate_condition",
    "make_provider",
    "StrokeConfig",
    "TaskSample",
    "degrade_gray",
    "degrade_inpaint",
    "degrade_sr",
    "sample_freeform_mask",
    "FeaturePyramid",
    "GeneratorSpec",
    "RestorationModel",
    "StrengthFactor",
    "StyleConv",
    "normalize_fusion_weights",
    "normalize_sr_factor",
    "LossConfig",
    "adv_loss_d",
    "adv_loss_g",
    "clip_loss",
    "pixel_loss",
    "total_g_loss",
    "psnr",
    "ssim",
    "TrainConfig",
    "Trainer",
    "load_model",
]
