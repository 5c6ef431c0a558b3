"""Corruption engine: determinism, shape preservation, and noise statistics.

The statistical oracles are computed from the clipped distributions
directly (numeric integration for the clipped normal, exact pmf sums for
the clipped Poisson, closed form for salt-and-pepper), independent of the
engine code under test.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from scene_robust.corruption.engine import apply_corruption, default_severity_table
from scene_robust.corruption.severity import (
    CORRUPTION_KINDS,
    SEVERITY_LEVELS,
    STRENGTH_FIELDS,
    load_severity_table,
)
from scene_robust.errors import ConfigurationError, DataError
from scene_robust.images import ImageBuffer, corrupted_filename
from scene_robust.seeds import derive_seed


def make_image(rng, h=64, w=64, image_id="t"):
    return ImageBuffer(image_id, rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


MID_GRAY = ImageBuffer("gray", np.full((256, 256, 3), 128, dtype=np.uint8))


class TestSeverityTable:
    def test_all_75_rows_present(self):
        table = load_severity_table()
        for kind in CORRUPTION_KINDS:
            for level in SEVERITY_LEVELS:
                assert table.params(kind, level)

    def test_exactly_15_kinds(self):
        assert len(CORRUPTION_KINDS) == 15
        assert set(CORRUPTION_KINDS) == {
            "gaussian_noise", "shot_noise", "impulse_noise", "defocus_blur",
            "glass_blur", "motion_blur", "zoom_blur", "snow", "frost", "fog",
            "brightness", "contrast", "elastic", "pixelate", "jpeg",
        }

    def test_strength_monotone_per_kind(self):
        table = load_severity_table()
        for kind in CORRUPTION_KINDS:
            field, direction = STRENGTH_FIELDS[kind]
            values = [table.params(kind, level)[field] for level in SEVERITY_LEVELS]
            deltas = np.diff(values) * direction
            assert np.all(deltas >= 0), (kind, values)

    def test_missing_row_is_config_error(self, tmp_path):
        cfg = tmp_path / "partial.txt"
        cfg.write_text("gaussian_noise 1 sigma=0.1\n")
        with pytest.raises(ConfigurationError, match="missing rows"):
            load_severity_table(cfg)

    def test_bad_level_rejected(self, tmp_path):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("gaussian_noise 9 sigma=0.1\n")
        with pytest.raises(ConfigurationError, match="outside"):
            load_severity_table(cfg)

    def test_unknown_kind_lookup(self):
        with pytest.raises(ConfigurationError, match="unknown corruption"):
            default_severity_table().params("vignette", 1)


class TestApplyCorruption:
    @pytest.mark.parametrize("kind", CORRUPTION_KINDS)
    def test_shape_and_id_preserved(self, rng, kind):
        image = make_image(rng, h=48, w=80)
        for level in SEVERITY_LEVELS:
            out = apply_corruption(image, kind, level, seed=11)
            assert out.pixels.shape == image.pixels.shape
            assert out.image_id == image.image_id
            assert out.pixels.dtype == np.uint8

    @pytest.mark.parametrize("kind", CORRUPTION_KINDS)
    def test_byte_determinism(self, rng, kind):
        image = make_image(rng)
        a = apply_corruption(image, kind, 3, seed=5)
        b = apply_corruption(image, kind, 3, seed=5)
        assert np.array_equal(a.pixels, b.pixels)

    def test_seed_matters_for_stochastic_kinds(self, rng):
        image = make_image(rng)
        for kind in ("gaussian_noise", "shot_noise", "impulse_noise", "glass_blur",
                     "motion_blur", "snow", "frost", "fog", "elastic"):
            a = apply_corruption(image, kind, 3, seed=1)
            b = apply_corruption(image, kind, 3, seed=2)
            assert not np.array_equal(a.pixels, b.pixels), kind

    def test_concurrent_invocations_identical(self, rng):
        """Byte-identity holds when the same work runs on many threads."""
        image = make_image(rng)
        tasks = [(kind, level) for kind in CORRUPTION_KINDS for level in (1, 5)]

        def run(task):
            kind, level = task
            seed = derive_seed(0, image.image_id, kind, level)
            return apply_corruption(image, kind, level, seed).pixels

        serial = [run(t) for t in tasks]
        with ThreadPoolExecutor(max_workers=8) as pool:
            threaded = list(pool.map(run, tasks))
        for a, b in zip(serial, threaded):
            assert np.array_equal(a, b)

    def test_degenerate_image_rejected(self):
        with pytest.raises(DataError, match="minimum size"):
            ImageBuffer("tiny", np.zeros((8, 8, 3), dtype=np.uint8))

    def test_pixelate_keeps_dimensions(self, rng):
        image = make_image(rng, h=50, w=33)
        for level in SEVERITY_LEVELS:
            out = apply_corruption(image, "pixelate", level, seed=0)
            assert out.pixels.shape == (50, 33, 3)

    def test_jpeg_emits_decodable_pixels_every_level(self, rng):
        image = make_image(rng)
        for level in SEVERITY_LEVELS:
            out = apply_corruption(image, "jpeg", level, seed=0)
            assert out.pixels.shape == image.pixels.shape


def _clipped_normal_std(sigma: float, mean: float = 0.5) -> float:
    """Numeric-integration oracle for the std of clip(mean + N(0, sigma), 0, 1)."""
    xs = np.linspace(-8 * sigma, 8 * sigma, 200001)
    dx = xs[1] - xs[0]
    pdf = np.exp(-(xs**2) / (2 * sigma**2)) / (sigma * np.sqrt(2 * np.pi))
    values = np.clip(mean + xs, 0.0, 1.0)
    m1 = float(np.sum(values * pdf) * dx)
    m2 = float(np.sum(values**2 * pdf) * dx)
    return float(np.sqrt(m2 - m1**2))


def _clipped_poisson_std(photons: float, mean: float = 0.5) -> float:
    """Exact pmf-sum oracle for the std of clip(Poisson(mean * c) / c, 0, 1)."""
    lam = mean * photons
    ks = np.arange(0, int(lam + 40 * np.sqrt(lam) + 40))
    log_pmf = ks * np.log(lam) - lam - np.array([np.sum(np.log(np.arange(1, k + 1))) for k in ks])
    pmf = np.exp(log_pmf)
    values = np.clip(ks / photons, 0.0, 1.0)
    m1 = float(np.sum(values * pmf))
    m2 = float(np.sum(values**2 * pmf))
    return float(np.sqrt(m2 - m1**2))


class TestNoiseStatistics:
    def test_gaussian_sigma_matches_config_at_level3(self):
        """Sample std on mid-gray matches the configured sigma within 5%."""
        table = default_severity_table()
        sigma = table.params("gaussian_noise", 3)["sigma"]
        out = apply_corruption(MID_GRAY, "gaussian_noise", 3, seed=7)
        sample = ((out.pixels.astype(np.float64) - 128.0) / 255.0).std()
        assert abs(sample - sigma) / sigma < 0.05

    @pytest.mark.parametrize("level", SEVERITY_LEVELS)
    def test_gaussian_all_levels_match_clipped_oracle(self, level):
        table = default_severity_table()
        sigma = table.params("gaussian_noise", level)["sigma"]
        out = apply_corruption(MID_GRAY, "gaussian_noise", level, seed=7)
        deviation = out.pixels.astype(np.float64) / 255.0 - np.float64(128 / 255)
        expected = _clipped_normal_std(sigma, mean=128 / 255)
        assert abs(deviation.std() - expected) / expected < 0.05

    @pytest.mark.parametrize("level", SEVERITY_LEVELS)
    def test_shot_noise_matches_clipped_oracle(self, level):
        table = default_severity_table()
        photons = table.params("shot_noise", level)["photons"]
        out = apply_corruption(MID_GRAY, "shot_noise", level, seed=7)
        sample = (out.pixels.astype(np.float64) / 255.0).std()
        expected = _clipped_poisson_std(photons, mean=128 / 255)
        assert abs(sample - expected) / expected < 0.05

    @pytest.mark.parametrize("level", SEVERITY_LEVELS)
    def test_impulse_noise_matches_closed_form(self, level):
        """std of salt-and-pepper on mid-gray is ~0.5 * sqrt(amount)."""
        table = default_severity_table()
        amount = table.params("impulse_noise", level)["amount"]
        out = apply_corruption(MID_GRAY, "impulse_noise", level, seed=7)
        deviation = (out.pixels.astype(np.float64) - 128.0) / 255.0
        expected = np.sqrt(amount * (128 / 255) ** 2)  # replaced pixels move ~0.5 either way
        assert abs(deviation.std() - expected) / expected < 0.05

    def test_noise_mad_monotone_in_severity(self, rng, mini_places):
        """Mean absolute deviation from clean is non-decreasing in level,
        checked on 10 fixture images for the three noise kinds."""
        records = mini_places.manifest.split("test")[:10]
        from scene_robust.images import load_image

        images = [load_image(mini_places.root / r.relative_path, r.image_id) for r in records]
        for kind in ("gaussian_noise", "shot_noise", "impulse_noise"):
            for image in images:
                mads = []
                for level in SEVERITY_LEVELS:
                    out = apply_corruption(image, kind, level, derive_seed(0, image.image_id, kind, level))
                    mads.append(np.abs(out.pixels.astype(float) - image.pixels.astype(float)).mean())
                assert all(b >= a * 0.999 for a, b in zip(mads, mads[1:])), (kind, mads)


class TestFilenames:
    def test_pattern(self):
        assert corrupted_filename("bar-001", "fog", 3) == "bar-001__fog__s3.png"

    def test_jpeg_extension(self):
        assert corrupted_filename("x", "jpeg", 5) == "x__jpeg__s5.jpg"
