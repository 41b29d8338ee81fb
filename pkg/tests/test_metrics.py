import math

import numpy as np
import pytest
import torch

from textrestore.losses import RandomFeatureExtractor
from textrestore.metrics import evaluate_dataset, perceptual_distance, psnr, ssim

from conftest import random_image, write_toy_dataset


def psnr_oracle(a, b, peak=1.0):
    mse = np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2)
    return float("inf") if mse == 0 else 10 * math.log10(peak**2 / mse)


def ssim_oracle(a, b, window=11, sigma=1.5, peak=1.0):
    """Brute-force Gaussian-window SSIM over valid positions (per channel)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    coords = np.arange(window) - (window - 1) / 2
    g = np.exp(-(coords**2) / (2 * sigma**2))
    g /= g.sum()
    win = np.outer(g, g)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    values = []
    for ch in range(a.shape[0]):
        for i in range(a.shape[1] - window + 1):
            for j in range(a.shape[2] - window + 1):
                pa = a[ch, i : i + window, j : j + window]
                pb = b[ch, i : i + window, j : j + window]
                mu_a = (win * pa).sum()
                mu_b = (win * pb).sum()
                var_a = (win * pa * pa).sum() - mu_a**2
                var_b = (win * pb * pb).sum() - mu_b**2
                cov = (win * pa * pb).sum() - mu_a * mu_b
                values.append(
                    ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                    / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
                )
    return float(np.mean(values))


class TestPsnr:
    def test_identical_images(self):
        x = random_image(0)
        assert psnr(x, x) == float("inf")

    def test_uniform_offset(self):
        x = torch.rand(3, 16, 16) * 0.8
        assert abs(psnr(x + 0.1, x) - 20.0) < 1e-6

    def test_matches_oracle(self):
        gen = torch.Generator().manual_seed(0)
        for _ in range(100):
            a = torch.rand(3, 8, 8, generator=gen)
            b = torch.rand(3, 8, 8, generator=gen)
            assert abs(psnr(a, b) - psnr_oracle(a, b)) < 1e-9

    def test_validation(self):
        with pytest.raises(ValueError):
            psnr(torch.rand(3, 4, 4), torch.rand(3, 5, 5))
        with pytest.raises(ValueError):
            psnr(torch.rand(3, 4, 4), torch.rand(3, 4, 4), peak=0)


class TestSsim:
    def test_identity(self):
        x = random_image(1)
        assert abs(ssim(x, x) - 1.0) < 1e-6

    def test_negative_image_low_score(self):
        x = torch.zeros(1, 32, 32)
        x[:, ::2] = 1.0  # high-contrast stripes
        assert ssim(x, 1 - x) < 0.2

    def test_symmetry(self):
        a = random_image(2)
        b = random_image(3)
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-9

    def test_matches_oracle(self):
        gen = torch.Generator().manual_seed(4)
        for _ in range(5):
            a = torch.rand(1, 16, 16, generator=gen)
            b = (a + torch.rand(1, 16, 16, generator=gen) * 0.3).clamp(0, 1)
            assert abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-6

    def test_too_small_image(self):
        with pytest.raises(ValueError, match="window"):
            ssim(torch.rand(3, 8, 8), torch.rand(3, 8, 8))


class TestPerceptualDistance:
    def test_identity(self):
        ext = RandomFeatureExtractor(3, seed=0)
        x = random_image(0)
        assert abs(perceptual_distance(x, x, ext)) < 1e-6

    def test_symmetry(self):
        ext = RandomFeatureExtractor(3, seed=0)
        a, b = random_image(1), random_image(2)
        assert abs(perceptual_distance(a, b, ext) - perceptual_distance(b, a, ext)) < 1e-6

    def test_ranking_sanity(self):
        ext = RandomFeatureExtractor(3, seed=0)
        gen = torch.Generator().manual_seed(5)
        wins = 0
        for k in range(50):
            a = torch.rand(3, 32, 32, generator=gen)
            near = (a + torch.randn(3, 32, 32, generator=gen) * 0.01).clamp(0, 1)
            far = torch.rand(3, 32, 32, generator=gen)
            wins += int(perceptual_distance(a, near, ext) < perceptual_distance(a, far, ext))
        assert wins == 50


class DatasetWrapper:
    def __init__(self, ds):
        self.ds = ds
        self.records = ds.records

    def __len__(self):
        return len(self.ds)

    def load_image(self, i):
        return self.ds.load_image(i)


class TestEvaluateDataset:
    def _dataset(self, tmp_path, captions=None):
        from textrestore.data import ImageDataset

        root = write_toy_dataset(tmp_path / "ds", n=4, size=32, captions=captions)
        return ImageDataset(root, 32)

    def test_perfect_restorer(self, tmp_path, provider):
        ds = self._dataset(tmp_path)

        def perfect(sample, condition):
            return sample.ground_truth

        report = evaluate_dataset(perfect, ds, "inpaint", provider, text_source="image", seed=0)
        assert report.evaluated == 4
        assert abs(report.mean_ssim - 1.0) < 1e-6
        assert report.mean_perceptual < 1e-6
        assert report.mean_psnr == float("inf")

    def test_identity_restorer_worse(self, tmp_path, provider):
        ds = self._dataset(tmp_path)

        def identity(sample, condition):
            return sample.degraded[:3]

        report = evaluate_dataset(identity, ds, "inpaint", provider, text_source="image", seed=0)
        assert report.mean_ssim < 1.0
        assert report.mean_perceptual > 0

    def test_missing_captions_skipped(self, tmp_path, provider):
        ds = self._dataset(tmp_path)  # no captions in manifest

        def perfect(sample, condition):
            return sample.ground_truth

        report = evaluate_dataset(perfect, ds, "inpaint", provider, text_source="captions", seed=0)
        assert report.skipped == 4
        assert report.evaluated == 0

    def test_caption_conditions_and_mean(self, tmp_path, provider):
        captions = [["a face"], ["a face", "a person"], ["hills"], ["sky"]]
        ds = self._dataset(tmp_path, captions=captions)
        seen = []

        def capture(sample, condition):
            seen.append(condition.clone())
            return sample.ground_truth

        report = evaluate_dataset(capture, ds, "inpaint", provider, text_source="captions", seed=0)
        assert report.evaluated == 4
        # single caption: condition equals that caption's embedding exactly
        assert torch.equal(seen[0], provider.embed_text("a face").values)
        expected = torch.stack(
            [provider.embed_text("a face").values, provider.embed_text("a person").values]
        ).mean(0)
        assert torch.equal(seen[1], expected)

    def test_order_insensitive_means(self, tmp_path, provider):
        ds = self._dataset(tmp_path)

        def noisy(sample, condition):
            return (sample.ground_truth + 0.05).clamp(0, 1)

        r1 = evaluate_dataset(noisy, ds, "inpaint", provider, text_source="image", seed=0)
        shuffled = DatasetWrapper(ds)
        order = [2, 0, 3, 1]
        shuffled.records = [ds.records[i] for i in order]
        shuffled.load_image = lambda i: ds.load_image(order[i])
        r2 = evaluate_dataset(noisy, shuffled, "inpaint", provider, text_source="image", seed=0)
        assert abs(r1.mean_psnr - r2.mean_psnr) < 1e-9
        assert abs(r1.mean_ssim - r2.mean_ssim) < 1e-9
        assert abs(r1.mean_perceptual - r2.mean_perceptual) < 1e-9

    def test_mean_is_arithmetic_mean(self, tmp_path, provider):
        ds = self._dataset(tmp_path)

        def noisy(sample, condition):
            return (sample.ground_truth * 0.9).clamp(0, 1)

        report = evaluate_dataset(noisy, ds, "inpaint", provider, text_source="image", seed=0)
        assert abs(report.mean_psnr - np.mean([x["psnr"] for x in report.per_image])) < 1e-9
        assert abs(report.mean_ssim - np.mean([x["ssim"] for x in report.per_image])) < 1e-9
