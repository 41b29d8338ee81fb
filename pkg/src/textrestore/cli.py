"""Command-line entry points: train, eval, restore, serve."""

import json
import sys
from pathlib import Path

import click
import torch

from .conditioning import interpolate_condition, make_provider
from .data import ImageDataset
from .degradations import SR_FACTORS, degrade_gray, degrade_inpaint, degrade_sr, load_mask_png
from .generator import normalize_sr_factor
from .metrics import evaluate_dataset
from .restore import output_to_rgb, png_to_tensor, tensor_to_png
from .training import TrainConfig, Trainer, load_model


@click.group()
def cli():
    """Text-conditioned image restoration toolkit."""


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Run config YAML.")
@click.option("--iters", type=int, default=None, help="Override max iterations.")
@click.option("--dataset", "dataset_root", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--resume", "resume_path", type=click.Path(exists=True), default=None)
def train(config_path, iters, dataset_root, seed, resume_path):
    """Train a restoration model from a run config file."""
    config = TrainConfig.from_yaml(config_path)
    if dataset_root:
        config.dataset_root = dataset_root
    if seed is not None:
        config.seed = seed
    if not config.dataset_root:
        raise click.UsageError("config has no dataset_root and --dataset was not given")
    dataset = ImageDataset(config.dataset_root, config.generator.image_size, split="train")
    if resume_path:
        trainer = Trainer.resume(resume_path, dataset=dataset)
    else:
        trainer = Trainer(config, dataset=dataset)
    trainer.train(
        num_iters=iters if iters is not None else config.max_iters,
        log_path=config.metrics_log,
        checkpoint_dir=config.checkpoint_dir,
    )
    final = Path(config.checkpoint_dir) / "final.ckpt"
    final.parent.mkdir(parents=True, exist_ok=True)
    trainer.save(final)
    click.echo(f"trained {trainer.step} steps; checkpoint at {final}")


@cli.command("eval")
@click.option("--task", required=True, type=click.Choice(["inpaint", "sr", "colorize"]))
@click.option("--dataset", "dataset_root", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--text-source", type=click.Choice(["captions", "image"]), default="captions")
@click.option("--seed", type=int, default=0)
@click.option("--split", default=None)
@click.option("--out", "out_path", type=click.Path(), default="report.json")
def eval_cmd(task, dataset_root, checkpoint, text_source, seed, split, out_path):
    """Benchmark a checkpoint on a dataset and write a metric report."""
    model, provider_spec, _ = load_model(checkpoint)
    if model.spec.task != task:
        raise click.ClickException(f"checkpoint serves task {model.spec.task!r}, not {task!r}")
    provider = make_provider(provider_spec.name, provider_spec.embedding_dim)
    dataset = ImageDataset(dataset_root, model.spec.image_size, split=split)

    def restore_fn(sample, condition):
        output = model.restore(
            sample.degraded,
            condition,
            normalize_sr_factor(sample.scale) if sample.scale else None,
        )
        return output_to_rgb(task, sample.degraded, output)

    report = evaluate_dataset(restore_fn, dataset, task, provider, text_source, seed)
    report.save(out_path)
    click.echo(report.table())
    click.echo(f"report written to {out_path}")


@cli.command()
@click.option("--task", required=True, type=click.Choice(["inpaint", "sr", "colorize"]))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None)
@click.option("--prompt", default=None)
@click.option("--beta", type=float, default=1.0)
@click.option("--sr-factor", type=click.Choice([str(f) for f in SR_FACTORS]), default=None)
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default="restored.png")
@click.option("--seed", type=int, default=0)
def restore(task, image_path, mask_path, prompt, beta, sr_factor, checkpoint, out_path, seed):
    """Restore one image under a text condition."""
    if not 0.0 <= beta <= 1.0:
        raise click.UsageError("--beta must be in [0, 1]")
    if beta > 0 and not prompt:
        raise click.UsageError("--prompt is required when beta > 0")
    if task == "inpaint" and not mask_path:
        raise click.UsageError("--mask is required for inpainting")
    if task == "sr" and not sr_factor:
        raise click.UsageError("--sr-factor is required for super-resolution")

    model, provider_spec, _ = load_model(checkpoint)
    if model.spec.task != task:
        raise click.ClickException(f"checkpoint serves task {model.spec.task!r}, not {task!r}")
    provider = make_provider(provider_spec.name, provider_spec.embedding_dim)
    image = png_to_tensor(Path(image_path).read_bytes())
    if image.shape[-2:] != (model.spec.image_size, model.spec.image_size):
        raise click.ClickException(
            f"image must be {model.spec.image_size}x{model.spec.image_size} for this checkpoint"
        )

    strength = None
    if task == "inpaint":
        sample = degrade_inpaint(image, load_mask_png(mask_path))
    elif task == "sr":
        factor = int(sr_factor)
        sample = degrade_sr(image, factor)
        strength = normalize_sr_factor(factor)
    else:
        sample = degrade_gray(image)

    if beta == 0.0:
        condition = provider.embed_image(image)
    else:
        condition = interpolate_condition(
            provider.embed_text(prompt), provider.embed_image(image), beta
        )
    torch.manual_seed(seed)
    output = model.restore(sample.degraded, condition.values, strength)
    rgb = output_to_rgb(task, sample.degraded, output)
    Path(out_path).write_bytes(tensor_to_png(rgb))
    click.echo(json.dumps({"out": str(out_path), "condition_source": condition.source, "beta": beta}))


@cli.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--workers", type=int, default=2)
@click.option("--queue-depth", type=int, default=8)
def serve(checkpoint, port, host, workers, queue_depth):
    """Run the HTTP restoration service."""
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint, workers=workers, queue_depth=queue_depth)
    uvicorn.run(app, host=host, port=port)


def main():
    try:
        cli(standalone_mode=True)
    except Exception as exc:  # pragma: no cover - click handles most paths
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
