import json

from click.testing import CliRunner

from textrestore.cli import cli
from textrestore.degradations import sample_freeform_mask, save_mask_png
from textrestore.restore import tensor_to_png
from textrestore.training import Trainer

from conftest import random_image, write_toy_dataset
from test_training import toy_config


def _checkpoint(tmp_path, task="inpaint"):
    path = tmp_path / "model.ckpt"
    Trainer(toy_config(task)).save(path)
    return path


def _image(tmp_path):
    p = tmp_path / "input.png"
    p.write_bytes(tensor_to_png(random_image(0, 32)))
    return p


def test_restore_inpaint_writes_png(tmp_path):
    ckpt = _checkpoint(tmp_path)
    img = _image(tmp_path)
    mask_path = tmp_path / "mask.png"
    save_mask_png(sample_freeform_mask(1, 32), mask_path)
    out = tmp_path / "out.png"
    result = CliRunner().invoke(
        cli,
        [
            "restore", "--task", "inpaint", "--image", str(img), "--mask", str(mask_path),
            "--prompt", "he is a bald man", "--checkpoint", str(ckpt), "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    assert out.exists()
    assert out.read_bytes()[:4] == b"\x89PNG"
    meta = json.loads(result.output.strip().splitlines()[-1])
    assert meta["condition_source"] == "text"


def test_restore_without_prompt_fails_usage(tmp_path):
    ckpt = _checkpoint(tmp_path)
    img = _image(tmp_path)
    result = CliRunner().invoke(
        cli, ["restore", "--task", "colorize", "--image", str(img), "--checkpoint", str(ckpt)]
    )
    assert result.exit_code == 2
    assert "prompt" in result.output


def test_unknown_flag_exits_2():
    result = CliRunner().invoke(cli, ["restore", "--bogus"])
    assert result.exit_code == 2
    assert "Usage" in result.output or "usage" in result.output


def test_task_checkpoint_mismatch(tmp_path):
    ckpt = _checkpoint(tmp_path, "inpaint")
    img = _image(tmp_path)
    result = CliRunner().invoke(
        cli,
        ["restore", "--task", "colorize", "--image", str(img), "--prompt", "x",
         "--checkpoint", str(ckpt)],
    )
    assert result.exit_code != 0
    assert "task" in result.output


def test_eval_writes_report(tmp_path):
    ckpt = _checkpoint(tmp_path)
    root = write_toy_dataset(tmp_path / "ds", n=3, size=32, captions=[["a face"]])
    out = tmp_path / "report.json"
    result = CliRunner().invoke(
        cli,
        ["eval", "--task", "inpaint", "--dataset", str(root), "--checkpoint", str(ckpt),
         "--text-source", "captions", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["evaluated"] == 3
    assert "PSNR" in result.output


def test_train_command(tmp_path):
    root = write_toy_dataset(tmp_path / "ds", n=3, size=32)
    cfg = toy_config("inpaint", dataset_root=str(root), checkpoint_every=0)
    cfg_path = tmp_path / "run.yaml"
    cfg.checkpoint_dir = str(tmp_path / "ck")
    cfg.metrics_log = str(tmp_path / "metrics.jsonl")
    cfg.to_yaml(cfg_path)
    result = CliRunner().invoke(cli, ["train", "--config", str(cfg_path), "--iters", "3"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "ck" / "final.ckpt").exists()
    lines = (tmp_path / "metrics.jsonl").read_text().strip().splitlines()
    assert len(lines) == 3
    assert {"step", "loss_d", "loss_g"} <= set(json.loads(lines[0]))
