"""Training loop: alternating discriminator / generator updates with
image-embedding conditions, metrics logging, and exact-resume
checkpointing.
"""

import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import yaml
from torch import nn

from .conditioning import EmbeddingProviderSpec, make_provider
from .data import Batch, ImageDataset, make_batch
from .degradations import StrokeConfig
from .generator import GeneratorSpec, RestorationModel
from .losses import (
    Discriminator,
    LossConfig,
    adv_loss_d,
    adv_loss_g,
    clip_loss,
    make_feature_extractor,
    perceptual_loss,
    pixel_loss,
    total_g_loss,
)
from .restore import output_to_rgb

CHECKPOINT_FORMAT = "textrestore-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    task: str = "inpaint"
    learning_rate: float = 2e-3
    d_learning_rate: Optional[float] = None  # None = same as generator
    batch_size: int = 16
    max_iters: int = 300_000
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    seed: int = 0
    dataset_root: str = ""
    provider: str = "stub-hash"
    extractor: str = "random"
    checkpoint_every: int = 5000
    keep_last: int = 3
    checkpoint_dir: str = "checkpoints"
    metrics_log: str = "metrics.jsonl"
    loss: LossConfig = field(default_factory=LossConfig)
    generator: GeneratorSpec = field(default_factory=lambda: GeneratorSpec("inpaint"))

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    @classmethod
    def for_task(cls, task: str, **overrides) -> "TrainConfig":
        cfg = cls(
            task=task,
            loss=LossConfig.for_task(task),
            generator=GeneratorSpec(task),
        )
        for key, value in overrides.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config field {key!r}")
            setattr(cfg, key, value)
        return cfg

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("loss", "generator")}
        d["loss"] = self.loss.to_dict()
        d["generator"] = self.generator.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        loss = LossConfig(**d.pop("loss", {}))
        gen = GeneratorSpec.from_dict(d.pop("generator"))
        return cls(loss=loss, generator=gen, **d)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_yaml(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


def _seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


class Trainer:
    """Owns model, discriminator, optimizers, and the step counter."""

    def __init__(self, config: TrainConfig, dataset: Optional[ImageDataset] = None, provider=None):
        self.config = config
        _seed_everything(config.seed)
        spec = config.generator
        if spec.task != config.task:
            raise ValueError(f"config task {config.task!r} != generator spec task {spec.task!r}")
        self.model = RestorationModel(spec)
        self.discriminator = Discriminator(spec.out_channels, spec.image_size)
        d_lr = config.d_learning_rate if config.d_learning_rate is not None else config.learning_rate
        betas = (config.adam_beta1, config.adam_beta2)
        self.opt_g = torch.optim.Adam(self.model.parameters(), lr=config.learning_rate, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=d_lr, betas=betas)
        self.provider = provider if provider is not None else make_provider(config.provider, spec.condition_dim)
        self.extractor = make_feature_extractor(config.extractor, in_channels=spec.out_channels)
        self.dataset = dataset
        self.rng = np.random.default_rng(config.seed)
        self.step = 0
        self.mask_config = StrokeConfig()

    def next_batch(self) -> Batch:
        if self.dataset is None:
            raise RuntimeError("trainer has no dataset attached")
        return make_batch(
            self.dataset,
            self.config.task,
            self.rng,
            self.config.batch_size,
            self.provider,
            self.mask_config,
        )

    def _clip_term(self, batch: Batch, output: torch.Tensor) -> torch.Tensor:
        values = []
        for i, sample in enumerate(batch.samples):
            restored_rgb = output_to_rgb(batch.task, batch.degraded[i], output[i])
            values.append(clip_loss(restored_rgb, sample.ground_truth, self.provider))
        return torch.stack(values).mean()

    def train_step(self, batch: Batch) -> dict:
        cfg = self.config.loss

        # discriminator update (generator frozen)
        with torch.no_grad():
            fake = self.model(batch.degraded, batch.conditions, batch.strength_override)
        real_logits = self.discriminator(batch.target)
        fake_logits = self.discriminator(fake)
        loss_d = cfg.adv_weight * adv_loss_d(real_logits, fake_logits)
        if cfg.r1_weight > 0:
            real = batch.target.detach().requires_grad_(True)
            grad = torch.autograd.grad(self.discriminator(real).sum(), real, create_graph=True)[0]
            loss_d = loss_d + cfg.r1_weight / 2 * grad.pow(2).sum(dim=(1, 2, 3)).mean()
        self.opt_d.zero_grad()
        loss_d.backward()
        self.opt_d.step()

        # generator + encoder update
        output = self.model(batch.degraded, batch.conditions, batch.strength_override)
        adv = adv_loss_g(self.discriminator(output))
        pixel = pixel_loss(output, batch.target, cfg.pixel_mode, cfg.smooth_l1_delta)
        perc = perceptual_loss(output, batch.target, self.extractor)
        clip = self._clip_term(batch, output)
        total, report = total_g_loss(adv, clip, pixel, perc, cfg)
        if not torch.isfinite(total):
            raise RuntimeError(
                "non-finite generator loss at step "
                f"{self.step}: terms={report.terms} weighted={report.weighted}"
            )
        self.opt_g.zero_grad()
        total.backward()
        self.opt_g.step()
        self.step += 1

        metrics = {
            "step": self.step,
            "loss_d": loss_d.detach().item(),
            "loss_g": report.total,
            **{f"g_{k}": v for k, v in report.terms.items()},
        }
        return metrics

    def train(
        self,
        num_iters: Optional[int] = None,
        log_path: Optional[str | Path] = None,
        checkpoint_dir: Optional[str | Path] = None,
    ) -> list[dict]:
        num_iters = num_iters if num_iters is not None else self.config.max_iters
        checkpoint_dir = Path(checkpoint_dir or self.config.checkpoint_dir)
        log_fh = open(log_path, "a") if log_path else None
        history = []
        try:
            for _ in range(num_iters):
                start = time.monotonic()
                batch = self.next_batch()
                metrics = self.train_step(batch)
                metrics["wall_ms"] = (time.monotonic() - start) * 1000.0
                history.append(metrics)
                if log_fh:
                    log_fh.write(json.dumps(metrics) + "\n")
                    log_fh.flush()
                if self.config.checkpoint_every and self.step % self.config.checkpoint_every == 0:
                    checkpoint_dir.mkdir(parents=True, exist_ok=True)
                    self.save(checkpoint_dir / f"step_{self.step:08d}.ckpt")
                    self._prune(checkpoint_dir)
        finally:
            if log_fh:
                log_fh.close()
        return history

    def _prune(self, checkpoint_dir: Path) -> None:
        ckpts = sorted(checkpoint_dir.glob("step_*.ckpt"))
        for stale in ckpts[: -self.config.keep_last]:
            stale.unlink()

    def save(self, path: str | Path) -> None:
        save_checkpoint(self, path)

    @classmethod
    def resume(cls, path: str | Path, dataset: Optional[ImageDataset] = None, provider=None) -> "Trainer":
        payload = _read_checkpoint(path)
        config = TrainConfig.from_dict(payload["train_config"])
        trainer = cls(config, dataset=dataset, provider=provider)
        trainer.model.load_state_dict(payload["model"])
        trainer.discriminator.load_state_dict(payload["discriminator"])
        trainer.opt_g.load_state_dict(payload["opt_g"])
        trainer.opt_d.load_state_dict(payload["opt_d"])
        trainer.step = payload["step"]
        torch.set_rng_state(payload["torch_rng"])
        trainer.rng.bit_generator.state = payload["numpy_rng"]
        random.setstate(payload["python_rng"])
        return trainer


def save_checkpoint(trainer: Trainer, path: str | Path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "generator_spec": trainer.config.generator.to_dict(),
        "provider_spec": trainer.provider.spec.to_dict(),
        "train_config": trainer.config.to_dict(),
        "step": trainer.step,
        "model": trainer.model.state_dict(),
        "discriminator": trainer.discriminator.state_dict(),
        "opt_g": trainer.opt_g.state_dict(),
        "opt_d": trainer.opt_d.state_dict(),
        "torch_rng": torch.get_rng_state(),
        "numpy_rng": trainer.rng.bit_generator.state,
        "python_rng": random.getstate(),
    }
    torch.save(payload, path)


def _read_checkpoint(path: str | Path) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')} unsupported (want {CHECKPOINT_VERSION})"
        )
    return payload


def load_model(
    path: str | Path, expected_spec: Optional[GeneratorSpec] = None
) -> tuple[RestorationModel, EmbeddingProviderSpec, dict]:
    """Load a checkpoint for inference; refuses spec mismatches."""
    payload = _read_checkpoint(path)
    spec = GeneratorSpec.from_dict(payload["generator_spec"])
    if expected_spec is not None and spec != expected_spec:
        raise CheckpointError(
            f"checkpoint generator spec {spec.to_dict()} does not match expected {expected_spec.to_dict()}"
        )
    model = RestorationModel(spec)
    model.load_state_dict(payload["model"])
    model.eval()
    provider_spec = EmbeddingProviderSpec.from_dict(payload["provider_spec"])
    meta = {"step": payload["step"], "train_config": payload.get("train_config", {})}
    return model, provider_spec, meta


def parameter_group_grads(model: RestorationModel) -> dict[str, float]:
    """Fraction of exactly-zero gradient entries per parameter group."""
    out = {}
    for name, params in model.parameter_groups().items():
        zeros = total = 0
        for p in params:
            if p.grad is None:
                raise RuntimeError(f"parameter in group {name!r} has no gradient")
            if not torch.isfinite(p.grad).all():
                raise RuntimeError(f"non-finite gradient in group {name!r}")
            zeros += int((p.grad == 0).sum())
            total += p.grad.numel()
        out[name] = zeros / total
    return out
