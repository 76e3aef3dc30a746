import numpy as np
import pytest

from adaptcd.errors import ConfigError, DimensionMismatchError
from adaptcd.imaging import Image
from adaptcd.radiometry import (
    AraConfig,
    adaptive_mix,
    align,
    compute_cdf,
    radiometric_transfer,
)
from conftest import random_image
from oracles import counting_cdf, ks_distance


def constant_image(value, h=8, w=8):
    return Image(np.full((h, w, 3), value, dtype=np.uint8))


class TestComputeCdf:
    def test_constant_image(self):
        cdfs = compute_cdf(constant_image(100))
        for cdf in cdfs:
            assert np.all(cdf.bins[:100] == 0.0)
            assert np.all(cdf.bins[100:] == 1.0)

    def test_two_pixel_extremes(self):
        data = np.zeros((1, 2, 3), dtype=np.uint8)
        data[0, 1, :] = 255
        cdfs = compute_cdf(Image(data))
        for cdf in cdfs:
            assert cdf.bins[0] == 0.5
            assert cdf.bins[255] == 1.0

    def test_matches_counting_oracle(self, rng):
        image = random_image(rng, 16, 16)
        cdfs = compute_cdf(image)
        for c in range(3):
            assert np.array_equal(cdfs[c].bins, counting_cdf(image.data[:, :, c]))

    def test_monotone_last_bin_one(self, rng):
        cdfs = compute_cdf(random_image(rng))
        for cdf in cdfs:
            assert np.all(np.diff(cdf.bins) >= 0)
            assert cdf.bins[255] == 1.0


class TestRadiometricTransfer:
    def test_self_reference_preserves_histogram(self, rng):
        image = random_image(rng, 16, 16, low=0, high=200)
        out = radiometric_transfer(image, image)
        for c in range(3):
            hist_in = np.bincount(image.data[:, :, c].ravel(), minlength=256)
            hist_out = np.bincount(out.data[:, :, c].ravel(), minlength=256)
            assert np.array_equal(hist_in, hist_out)

    def test_constant_to_constant(self):
        out = radiometric_transfer(constant_image(50), constant_image(200))
        assert np.all(out.data == 200)

    def test_shift_without_clipping_recovers_reference(self, rng):
        ref = random_image(rng, 16, 16, low=0, high=220)
        shifted = Image((ref.data.astype(np.int16) + 30).clip(0, 255).astype(np.uint8))
        out = radiometric_transfer(shifted, ref)
        for c in range(3):
            assert ks_distance(out.data[:, :, c], ref.data[:, :, c]) == 0.0

    def test_transfer_monotone_and_intensity_pure(self, rng):
        # exhaustive over 256 values x 3 channels on randomized image pairs
        for _ in range(20):
            src = random_image(rng, 12, 12)
            ref = random_image(rng, 12, 12)
            out = radiometric_transfer(src, ref)
            for c in range(3):
                seen = {}
                for v, t in zip(src.data[:, :, c].ravel(), out.data[:, :, c].ravel()):
                    if v in seen:
                        assert seen[v] == t  # pure function of intensity
                    seen[v] = t
                values = sorted(seen)
                mapped = [seen[v] for v in values]
                assert all(a <= b for a, b in zip(mapped, mapped[1:]))

    def test_dim_mismatch(self, rng):
        with pytest.raises(DimensionMismatchError):
            radiometric_transfer(random_image(rng, 4, 4), random_image(rng, 4, 5))


class TestAdaptiveMix:
    def test_identical_inputs(self, rng):
        image = random_image(rng)
        result = adaptive_mix(image, image, AraConfig(tau_max=0.25))
        assert result.delta_max == 0.0
        assert result.alpha == 1.0
        assert np.array_equal(result.aligned.data, image.data)

    def test_direct_arithmetic(self):
        # one pixel transferred 200 vs original 100, others equal:
        # delta_max drives alpha, blended pixel = alpha*200 + (1-alpha)*100
        transferred = constant_image(100).data.copy()
        transferred[0, 0, 0] = 200
        original = constant_image(100)
        result = adaptive_mix(Image(transferred), original, AraConfig(tau_max=100 / 255 / 2))
        assert result.alpha == pytest.approx(0.5)
        assert result.aligned.data[0, 0, 0] == 150

    def test_convexity_bounds(self, rng):
        for _ in range(100):
            t = random_image(rng, 8, 8)
            o = random_image(rng, 8, 8)
            result = adaptive_mix(t, o, AraConfig(tau_max=0.3))
            lo = np.minimum(t.data, o.data)
            hi = np.maximum(t.data, o.data)
            assert np.all(result.aligned.data >= lo)
            assert np.all(result.aligned.data <= hi)
            if result.alpha < 1.0:
                assert result.alpha * result.delta_max <= 0.3 + 1e-12

    def test_alpha_saturation(self, rng):
        t = random_image(rng, 8, 8, low=100, high=110)
        o = random_image(rng, 8, 8, low=100, high=110)
        result = adaptive_mix(t, o, AraConfig(tau_max=1.0))
        assert result.alpha == 1.0
        assert np.array_equal(result.aligned.data, t.data)


class TestAlign:
    def test_identical_pair_is_fixed_point(self, rng):
        image = random_image(rng, 16, 16)
        result = align(image, image, AraConfig())
        assert np.array_equal(result.aligned.data, image.data)
        assert result.delta_max == 0.0

    def test_brightened_pair_reduces_ks_distance(self, rng):
        strict = 0
        for _ in range(50):
            a = random_image(rng, 16, 16, low=0, high=215)
            b = Image((a.data.astype(np.int16) + 40).clip(0, 255).astype(np.uint8))
            result = align(a, b, AraConfig(tau_max=0.25))
            for c in range(3):
                before = ks_distance(b.data[:, :, c], a.data[:, :, c])
                after = ks_distance(result.aligned.data[:, :, c], a.data[:, :, c])
                assert after <= before
                if after < before:
                    strict += 1
        assert strict >= 0.99 * 50 * 3

    def test_small_tau_keeps_alignment_near_original(self, rng):
        a = constant_image(30, 16, 16)
        b = constant_image(220, 16, 16)
        result = align(a, b, AraConfig(tau_max=0.05))
        to_original = np.abs(result.aligned.data.astype(int) - b.data.astype(int)).max()
        to_transferred = np.abs(
            result.aligned.data.astype(int) - result.transferred.data.astype(int)
        ).max()
        assert to_original < to_transferred

    def test_determinism(self, rng):
        a = random_image(rng, 16, 16)
        b = random_image(rng, 16, 16)
        r1 = align(a, b, AraConfig())
        r2 = align(a, b, AraConfig())
        assert np.array_equal(r1.aligned.data, r2.aligned.data)
        assert r1.alpha == r2.alpha


class TestAraConfig:
    def test_tau_bounds(self):
        with pytest.raises(ConfigError):
            AraConfig(tau_max=0.0)
        with pytest.raises(ConfigError):
            AraConfig(tau_max=1.5)
