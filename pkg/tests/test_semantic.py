import math

import numpy as np
import pytest

from adaptcd.comparison import CandidateSet, RegionScore
from adaptcd.errors import ConfigError, EmptyRegionError
from adaptcd.imaging import Image, MaskSet, rle_decode, rle_encode
from adaptcd.providers import EmbeddingProviderSpec
from adaptcd.semantic import (
    AcfConfig,
    TextPrototypes,
    adaptive_conf_threshold,
    classify_region,
    connected_filter,
    crop_region,
    identify,
)
from oracles import percentile_closest_ranks


def solid_image(rgb, h=100, w=100):
    data = np.zeros((h, w, 3), dtype=np.uint8)
    data[:, :] = rgb
    return Image(data)


def rect_mask(h, w, r0, c0, r1, c1):
    grid = np.zeros((h, w), dtype=np.uint8)
    grid[r0:r1, c0:c1] = 1
    return rle_encode(grid)


ANCHORS = {"target words": (0.9, 0.1, 0.1), "background words": (0.1, 0.1, 0.9)}
PROTOS = TextPrototypes(target="target words", background="background words")


def provider():
    return EmbeddingProviderSpec(kind="synthetic-color", anchors=ANCHORS)


class TestCropRegion:
    def test_pad_rule(self):
        image = solid_image((10, 10, 10))
        crop = crop_region(image, rect_mask(100, 100, 10, 10, 20, 20), AcfConfig())
        # box side 10, pad = max(4, round(0.1 * 10)) = 4 -> (6,6,24,24)
        assert crop.shape == (18, 18)

    def test_corner_clamped(self):
        image = solid_image((10, 10, 10))
        crop = crop_region(image, rect_mask(100, 100, 0, 0, 5, 5), AcfConfig())
        assert crop.shape == (9, 9)

    def test_full_frame(self):
        image = solid_image((10, 10, 10), 40, 60)
        crop = crop_region(image, rect_mask(40, 60, 0, 0, 40, 60), AcfConfig())
        assert crop.shape == (40, 60)

    def test_large_box_uses_fraction(self):
        image = solid_image((10, 10, 10), 200, 200)
        crop = crop_region(image, rect_mask(200, 200, 50, 50, 150, 150), AcfConfig())
        # box side 100 -> pad = round(0.1 * 100) = 10 -> 120x120
        assert crop.shape == (120, 120)

    def test_empty_mask_raises(self):
        with pytest.raises(EmptyRegionError):
            crop_region(solid_image((1, 1, 1)), rle_encode(np.zeros((100, 100), np.uint8)), AcfConfig())


class TestClassifyRegion:
    def test_equal_similarities_give_half(self):
        # gray crop is equidistant from the two symmetric anchors
        cls = classify_region(solid_image((128, 128, 128)), 0, PROTOS, provider(), AcfConfig())
        assert cls.p_target == pytest.approx(0.5, abs=1e-12)

    def test_softmax_example_temperature_one(self):
        # p = e^0.8 / (e^0.8 + e^0.2) for sims 0.8/0.2 at T=1
        config = AcfConfig(softmax_temperature=1.0)
        cls = classify_region(solid_image((200, 40, 40)), 0, PROTOS, provider(), config)
        expected = 1.0 / (1.0 + math.exp(-(cls.sim_target - cls.sim_background)))
        assert cls.p_target == pytest.approx(expected, abs=1e-12)
        reference = math.exp(0.8) / (math.exp(0.8) + math.exp(0.2))
        assert reference == pytest.approx(0.6457, abs=5e-5)  # frozen softmax value

    def test_saturation_at_high_temperature(self):
        config = AcfConfig(softmax_temperature=100.0)
        cls = classify_region(solid_image((220, 10, 10)), 0, PROTOS, provider(), config)
        assert cls.sim_target - cls.sim_background > 0.6
        assert 1.0 - cls.p_target < 1e-20

    def test_swapped_prototypes_complement(self):
        crop = solid_image((180, 60, 90))
        config = AcfConfig(softmax_temperature=7.0)
        swapped = TextPrototypes(target="background words", background="target words")
        p = classify_region(crop, 0, PROTOS, provider(), config).p_target
        q = classify_region(crop, 0, swapped, provider(), config).p_target
        assert p + q == pytest.approx(1.0, abs=1e-12)

    def test_temperature_preserves_argmax(self):
        crop = solid_image((150, 80, 60))
        decisions = set()
        for temp in (0.5, 1.0, 10.0, 100.0):
            cls = classify_region(crop, 0, PROTOS, provider(), AcfConfig(softmax_temperature=temp))
            decisions.add(cls.p_target > 0.5)
        assert len(decisions) == 1

    def test_black_crop_degenerate_scores_zero(self):
        cls = classify_region(solid_image((0, 0, 0)), 0, PROTOS, provider(), AcfConfig())
        assert cls.p_target == 0.0


class TestAdaptiveConfThreshold:
    def test_single_element_clips_at_floor(self):
        config = AcfConfig(percentile=25.0, lambda_=1.2, clip_lo=0.5, clip_hi=0.95)
        assert adaptive_conf_threshold([0.6], config) == pytest.approx(0.5)

    def test_interpolated_percentile(self):
        config = AcfConfig(percentile=25.0, lambda_=1.2, clip_lo=0.5, clip_hi=0.95)
        got = adaptive_conf_threshold([0.6, 0.7, 0.8, 0.9], config)
        assert got == pytest.approx(0.675 / 1.2)  # P25 = 0.675 by linear interpolation

    def test_huge_lambda_hits_floor(self, rng):
        config = AcfConfig(percentile=50.0, lambda_=1e9, clip_lo=0.4, clip_hi=0.95)
        values = list(rng.random(20))
        assert adaptive_conf_threshold(values, config) == pytest.approx(0.4)

    def test_empty_means_no_positives(self):
        assert adaptive_conf_threshold([], AcfConfig()) is None

    def test_matches_independent_percentile_oracle(self, rng):
        config = AcfConfig(percentile=37.5, lambda_=1.3, clip_lo=0.0, clip_hi=1.0)
        for _ in range(500):
            values = list(rng.random(int(rng.integers(1, 40))))
            got = adaptive_conf_threshold(values, config)
            expected = np.clip(percentile_closest_ranks(values, 37.5) / 1.3, 0.0, 1.0)
            assert abs(got - expected) < 1e-9

    def test_always_inside_clip_range(self, rng):
        config = AcfConfig(percentile=80.0, lambda_=0.7, clip_lo=0.3, clip_hi=0.6)
        for _ in range(100):
            values = list(rng.random(int(rng.integers(1, 15))))
            got = adaptive_conf_threshold(values, config)
            assert 0.3 <= got <= 0.6


class TestConnectedFilter:
    def test_single_clean_mask_fully_retained(self):
        mask = rect_mask(50, 50, 10, 10, 20, 20)
        config = AcfConfig(a_min=64, mu_min=0.5, gamma=0.5)
        change = connected_filter([(mask, 0.8)], (50, 50), config)
        assert np.array_equal(rle_decode(change.mask), rle_decode(mask))
        stats = change.region_stats[0]
        assert stats.reliable and stats.cv == 0.0 and stats.mean_confidence == 0.8

    def test_small_component_dropped(self):
        mask = rect_mask(50, 50, 0, 0, 2, 5)  # area 10 < 64
        change = connected_filter([(mask, 0.9)], (50, 50), AcfConfig(a_min=64))
        assert change.mask.area() == 0
        assert not change.region_stats[0].reliable

    def test_overlapping_masks_use_max_confidence(self):
        m1 = rect_mask(40, 40, 5, 5, 15, 15)
        m2 = rect_mask(40, 40, 10, 10, 20, 20)
        config = AcfConfig(a_min=10, mu_min=0.5, gamma=1.0)
        change = connected_filter([(m1, 0.6), (m2, 0.9)], (40, 40), config)
        grid1 = rle_decode(m1).astype(bool)
        grid2 = rle_decode(m2).astype(bool)
        conf = np.zeros((40, 40))
        conf[grid1] = 0.6
        conf[grid2] = 0.9  # overlap takes the max = 0.9
        values = conf[grid1 | grid2]
        mu, sigma = values.mean(), values.std()
        stats = change.region_stats[0]
        assert stats.mean_confidence == pytest.approx(mu)
        assert stats.std_confidence == pytest.approx(sigma)
        assert stats.cv == pytest.approx(sigma / mu)
        assert stats.reliable == (stats.cv < 1.0)

    def test_gates_recheckable_post_hoc(self, rng):
        # every retained component must satisfy all three gates when
        # recomputed from scratch off the confidence grid
        from adaptcd.imaging import connected_components_8

        config = AcfConfig(a_min=20, mu_min=0.4, gamma=0.6)
        for _ in range(100):
            accepted = []
            for _ in range(rng.integers(1, 6)):
                r0, c0 = rng.integers(0, 30, 2)
                h, w = rng.integers(2, 12, 2)
                accepted.append(
                    (rect_mask(48, 48, r0, c0, min(r0 + h, 48), min(c0 + w, 48)),
                     float(rng.uniform(0.2, 1.0)))
                )
            change = connected_filter(accepted, (48, 48), config)
            final = rle_decode(change.mask)
            if not final.any():
                continue
            _, comps = connected_components_8(change.mask)
            for comp in comps:
                values = change.confidence[comp.rows, comp.cols]
                assert comp.area >= config.a_min
                assert values.mean() >= config.mu_min
                assert values.std() / values.mean() < config.gamma


class TestIdentify:
    def test_empty_candidates_empty_mask(self):
        image = solid_image((50, 50, 50), 64, 64)
        masks = MaskSet(masks=(rect_mask(64, 64, 0, 0, 16, 16),), sources=("phase-a",))
        change, classifications, tau = identify(
            CandidateSet(scores=()), image, masks, PROTOS, provider(), AcfConfig()
        )
        assert change.mask.area() == 0 and classifications == [] and tau is None

    def test_all_background_means_empty_mask(self):
        image = solid_image((20, 20, 220), 64, 64)  # everything background-colored
        mask = rect_mask(64, 64, 8, 8, 40, 40)
        masks = MaskSet(masks=(mask,), sources=("phase-a",))
        score = RegionScore(0, np.ones(3), np.ones(3), -0.5)
        change, classifications, tau = identify(
            CandidateSet(scores=(score,)), image, masks, PROTOS, provider(), AcfConfig()
        )
        assert classifications[0].p_target < 0.5
        assert tau is None and change.mask.area() == 0

    def test_target_kept_background_rejected(self):
        image = np.zeros((64, 64, 3), dtype=np.uint8)
        image[:, :] = (20, 20, 220)
        image[4:36, 4:36] = (220, 20, 20)  # target-colored block
        masks = MaskSet(
            masks=(rect_mask(64, 64, 4, 4, 36, 36), rect_mask(64, 64, 44, 44, 60, 60)),
            sources=("phase-a", "phase-a"),
        )
        scores = tuple(RegionScore(i, np.ones(3), np.ones(3), -0.5) for i in range(2))
        change, classifications, tau = identify(
            CandidateSet(scores=scores), Image(image), masks, PROTOS, provider(),
            AcfConfig(a_min=16),
        )
        final = rle_decode(change.mask)
        assert final[4:36, 4:36].all()
        assert not final[44:60, 44:60].any()

    def test_accepted_ids_monotone_in_lambda(self, rng):
        image = np.zeros((64, 64, 3), dtype=np.uint8)
        colors = [(220, 30, 30), (180, 60, 60), (150, 90, 90), (120, 110, 110)]
        masks = []
        for i, color in enumerate(colors):
            r = i * 16
            image[r : r + 16, 0:16] = color
            masks.append(rect_mask(64, 64, r, 0, r + 16, 16))
        mask_set = MaskSet(masks=tuple(masks), sources=("phase-a",) * 4)
        scores = tuple(RegionScore(i, np.ones(3), np.ones(3), -0.5) for i in range(4))
        previous: set[int] = set()
        for lam in (0.8, 1.0, 1.5, 3.0, 10.0):
            config = AcfConfig(
                lambda_=lam, clip_lo=0.05, clip_hi=0.95, a_min=16,
                softmax_temperature=4.0, mu_min=0.0, gamma=100.0,
            )
            change, classifications, tau = identify(
                CandidateSet(scores=scores), Image(image), mask_set, PROTOS, provider(), config
            )
            accepted = {c.mask_id for c in classifications if tau is not None and c.p_target > tau}
            assert previous.issubset(accepted)
            previous = accepted


class TestAcfConfigValidation:
    def test_bounds(self):
        with pytest.raises(ConfigError):
            AcfConfig(percentile=0.0)
        with pytest.raises(ConfigError):
            AcfConfig(lambda_=0.0)
        with pytest.raises(ConfigError):
            AcfConfig(clip_lo=0.8, clip_hi=0.4)
        with pytest.raises(ConfigError):
            AcfConfig(softmax_temperature=0.0)

    def test_prototypes_must_differ(self):
        with pytest.raises(ConfigError):
            TextPrototypes(target="same", background="same")
