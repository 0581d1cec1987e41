"""Distortion exactness, kernel normalization, sampling, and determinism."""

import json
import math

import numpy as np
import pytest

from qacap.dataset import DatasetRecord, load_dataset
from qacap.noise import (
    DistributionKind,
    NoiseDistribution,
    NoiseEvent,
    NoiseType,
    ParameterError,
    apply_event,
    augment_dataset,
    augmented_records,
    contrast,
    crop,
    cutout,
    defocus_blur,
    defocus_kernel,
    flip_vertical,
    load_manifest,
    load_raster,
    motion_blur,
    motion_blur_kernel,
    per_image_rng,
    rotate,
    sample_event,
)
from tests.conftest import make_raster
from tests.oracles import convolve_oracle


class TestCrop:
    def test_max_crop_of_square(self, rng):
        img = make_raster(rng, 100, 100)
        assert crop(img, 0.2, 0.2, 0.2, 0.2).shape == (60, 60, 3)

    def test_zero_fractions_identity(self, rng):
        img = make_raster(rng)
        np.testing.assert_array_equal(crop(img, 0, 0, 0, 0), img)

    def test_floor_rule_on_tiny_image(self, rng):
        # floor((0.2 + 0.2) * 4) = 1 column removed in total
        img = make_raster(rng, 4, 4)
        assert crop(img, 0.2, 0.2, 0.0, 0.0).shape == (4, 3, 3)

    def test_result_is_exact_subrectangle(self, rng):
        img = make_raster(rng, 20, 30)
        out = crop(img, 0.1, 0.05, 0.15, 0.0)
        h, w = out.shape[:2]
        found = False
        for y0 in range(20 - h + 1):
            for x0 in range(30 - w + 1):
                if (img[y0:y0 + h, x0:x0 + w] == out).all():
                    found = True
        assert found

    @pytest.mark.parametrize("frac", [-0.01, 0.21, 1.0])
    def test_fraction_out_of_range(self, rng, frac):
        with pytest.raises(ParameterError):
            crop(make_raster(rng), frac, 0, 0, 0)


class TestRotate:
    def test_zero_degrees_identity(self, rng):
        img = make_raster(rng)
        np.testing.assert_array_equal(rotate(img, 0.0), img)

    def test_uniform_gray_stays_gray_or_black(self, rng):
        img = np.full((21, 17, 3), 120, np.uint8)
        out = rotate(img, 33.0)
        gray = (out == 120).all(axis=2)
        black = (out == 0).all(axis=2)
        assert (gray | black).all()
        assert gray.any() and black.any()

    def test_center_pixel_is_fixed_point(self):
        img = np.zeros((3, 3, 3), np.uint8)
        img[1, 1] = 255
        out = rotate(img, 45.0)
        assert (out[1, 1] == 255).all()

    @pytest.mark.parametrize("deg", [-45.1, 46.0, 90.0])
    def test_degrees_out_of_range(self, rng, deg):
        with pytest.raises(ParameterError):
            rotate(make_raster(rng), deg)

    def test_dimensions_preserved(self, rng):
        img = make_raster(rng, 13, 29)
        assert rotate(img, -31.5).shape == img.shape


class TestFlip:
    def test_involution(self, rng):
        img = make_raster(rng)
        np.testing.assert_array_equal(flip_vertical(flip_vertical(img)), img)

    def test_single_row_identity(self, rng):
        img = make_raster(rng, 1, 7)
        np.testing.assert_array_equal(flip_vertical(img), img)

    def test_two_rows_swap(self):
        img = np.array([[[10, 10, 10]], [[20, 20, 20]]], np.uint8)
        out = flip_vertical(img)
        assert out[0, 0, 0] == 20 and out[1, 0, 0] == 10


class TestMotionBlur:
    def test_constant_image_invariant(self):
        img = np.full((40, 40, 3), 77, np.uint8)
        np.testing.assert_array_equal(motion_blur(img, 15, 45), img)
        np.testing.assert_array_equal(motion_blur(img, 49, -45), img)

    def test_kernel_sums_to_one(self):
        for size in range(15, 50, 2):
            for angle in (-45, 45):
                total = motion_blur_kernel(size, angle).sum()
                assert abs(total - 1.0) < 1e-12

    def test_point_source_spreads_along_antidiagonal(self):
        # a lone white pixel convolved with a 15-tap line of weight 1/15
        img = np.zeros((31, 31, 3), np.uint8)
        img[15, 15] = 255
        out = motion_blur(img, 15, 45)
        lit = np.argwhere((out > 0).any(axis=2))
        assert len(lit) == 15
        assert all(y + x == 30 for y, x in lit)  # anti-diagonal through center
        assert (out[(out > 0).any(axis=2)] == 17).all()  # round(255/15)

    def test_matches_direct_convolution(self, rng):
        img = make_raster(rng, 18, 22)
        kernel = motion_blur_kernel(15, -45)
        np.testing.assert_array_equal(motion_blur(img, 15, -45),
                                      convolve_oracle(img, kernel))

    @pytest.mark.parametrize("size", [14, 13, 50, 51])
    def test_kernel_size_rejected(self, rng, size):
        with pytest.raises(ParameterError):
            motion_blur(make_raster(rng), size, 45)

    def test_bad_angle_rejected(self, rng):
        with pytest.raises(ParameterError):
            motion_blur(make_raster(rng), 15, 30)


class TestDefocusBlur:
    def test_constant_image_invariant(self):
        img = np.full((30, 30, 3), 201, np.uint8)
        for severity in range(1, 6):
            np.testing.assert_array_equal(defocus_blur(img, severity), img)

    def test_kernel_sums_to_one(self):
        for severity in range(1, 6):
            assert abs(defocus_kernel(severity).sum() - 1.0) < 1e-12

    def test_step_edge_transition_width(self):
        # white right half; blur smears the edge across ~the disk diameter
        img = np.zeros((20, 40, 3), np.uint8)
        img[:, 20:] = 255
        out = defocus_blur(img, 1)
        oracle = convolve_oracle(img, defocus_kernel(1))
        np.testing.assert_array_equal(out, oracle)
        middle_row = out[10, :, 0].astype(int)
        transition = np.sum((middle_row > 0) & (middle_row < 255))
        radius = 3
        assert 2 * radius - 1 <= transition <= 2 * radius + 1

    def test_matches_direct_convolution(self, rng):
        img = make_raster(rng, 16, 16)
        np.testing.assert_array_equal(defocus_blur(img, 2),
                                      convolve_oracle(img, defocus_kernel(2)))

    @pytest.mark.parametrize("severity", [0, 6, -1])
    def test_severity_out_of_range(self, rng, severity):
        with pytest.raises(ParameterError):
            defocus_blur(make_raster(rng), severity)


class TestContrast:
    def test_gamma_one_identity(self, rng):
        img = make_raster(rng)
        np.testing.assert_array_equal(contrast(img, 1.0), img)

    @pytest.mark.parametrize("gamma", [0.5, 0.77, 1.0, 1.31, 2.0])
    def test_black_and_white_fixed_points(self, gamma):
        img = np.array([[[0, 0, 0], [255, 255, 255]]], np.uint8)
        out = contrast(img, gamma)
        assert (out[0, 0] == 0).all() and (out[0, 1] == 255).all()

    def test_gamma_two_on_64(self):
        img = np.full((1, 1, 3), 64, np.uint8)
        assert (contrast(img, 2.0) == 16).all()  # round(255 * (64/255)^2)

    def test_gamma_below_one_brightens(self, rng):
        img = make_raster(rng)
        assert (contrast(img, 0.5).astype(int) >= img.astype(int)).all()

    @pytest.mark.parametrize("gamma", [0.49, 2.01, -1.0])
    def test_gamma_out_of_range(self, rng, gamma):
        with pytest.raises(ParameterError):
            contrast(make_raster(rng), gamma)


class TestCutout:
    def test_half_by_half_covers_quarter(self, rng):
        img = make_raster(rng, 100, 100)
        img[(img == 128).all(axis=2)] = 129  # ensure no accidental gray pixels
        out = cutout(img, 0.5, 0.5, pos_seed=11)
        gray = (out == 128).all(axis=2)
        assert gray.sum() == 2500
        np.testing.assert_array_equal(out[~gray], img[~gray])

    def test_all_gray_image_unchanged(self):
        img = np.full((30, 30, 3), 128, np.uint8)
        np.testing.assert_array_equal(cutout(img, 0.3, 0.3, pos_seed=5), img)

    def test_same_seed_same_rectangle(self, rng):
        img = make_raster(rng, 50, 60)
        a = cutout(img, 0.25, 0.4, pos_seed=99)
        b = cutout(img, 0.25, 0.4, pos_seed=99)
        np.testing.assert_array_equal(a, b)

    def test_rectangle_fully_inside(self, rng):
        img = np.zeros((40, 40, 3), np.uint8)
        for seed in range(25):
            out = cutout(img, 0.5, 0.5, pos_seed=seed)
            assert ((out == 128).all(axis=2)).sum() == 400

    @pytest.mark.parametrize("frac", [0.05, 0.51, 0.0])
    def test_fraction_out_of_range(self, rng, frac):
        with pytest.raises(ParameterError):
            cutout(make_raster(rng), frac, 0.3, pos_seed=1)


class TestDistributions:
    def test_all_weights_sum_to_one(self):
        for kind in DistributionKind:
            dist = NoiseDistribution.of(kind)
            assert abs(sum(dist.weights.values()) - 1.0) < 1e-9

    def test_frequent_restricted_to_blur_and_cutout(self):
        dist = NoiseDistribution.frequent()
        allowed = {NoiseType.MOTION_BLUR, NoiseType.DEFOCUS_BLUR, NoiseType.CUTOUT}
        for noise_type, weight in dist.weights.items():
            assert weight == 0.0 or noise_type in allowed
        assert dist.weights[NoiseType.CUTOUT] == 0.5

    def test_random_is_uniform(self):
        dist = NoiseDistribution.random()
        assert all(w == 0.125 for w in dist.weights.values())

    def test_original_weights(self):
        # flaw shares normalized by their 128.6 total, blur and rotation
        # families split evenly
        dist = NoiseDistribution.original()
        expected = {
            NoiseType.CROP: 55.6 / 128.6,
            NoiseType.MOTION_BLUR: 41.0 / 128.6 / 2,
            NoiseType.DEFOCUS_BLUR: 41.0 / 128.6 / 2,
            NoiseType.ROTATION: 17.5 / 128.6 / 2,
            NoiseType.FLIP: 17.5 / 128.6 / 2,
            NoiseType.CONTRAST_BRIGHT: 5.3 / 128.6,
            NoiseType.CONTRAST_DARK: 5.6 / 128.6,
            NoiseType.CUTOUT: 3.6 / 128.6,
        }
        for noise_type, weight in expected.items():
            assert dist.weights[noise_type] == pytest.approx(weight, abs=1e-12)
        assert dist.weights[NoiseType.CROP] == pytest.approx(0.4324, abs=1e-4)
        assert dist.weights[NoiseType.CUTOUT] == pytest.approx(0.0280, abs=1e-4)

    def test_invalid_weights_rejected(self):
        with pytest.raises(ParameterError):
            NoiseDistribution(DistributionKind.RANDOM,
                              {NoiseType.FLIP: 0.5})


class TestSampleEvent:
    def test_parameters_respect_ranges(self):
        gen = np.random.Generator(np.random.Philox(key=3))
        dist = NoiseDistribution.random()
        seen = set()
        for _ in range(4000):
            event = sample_event(dist, gen)
            seen.add(event.noise_type)
            p = event.params
            if event.noise_type is NoiseType.MOTION_BLUR:
                assert p["kernel"] % 2 == 1 and 15 <= p["kernel"] <= 49
                assert p["angle"] in (-45, 45)
            elif event.noise_type is NoiseType.DEFOCUS_BLUR:
                assert 1 <= p["severity"] <= 5
            elif event.noise_type is NoiseType.CONTRAST_BRIGHT:
                assert 0.5 <= p["gamma"] < 1.0
            elif event.noise_type is NoiseType.CONTRAST_DARK:
                assert 1.0 < p["gamma"] <= 2.0
            elif event.noise_type is NoiseType.CROP:
                assert all(0.0 <= p[k] <= 0.2 for k in ("left", "right", "top", "bottom"))
            elif event.noise_type is NoiseType.CUTOUT:
                assert 0.1 <= p["frac_h"] <= 0.5 and 0.1 <= p["frac_w"] <= 0.5
            elif event.noise_type is NoiseType.ROTATION:
                assert -45.0 <= p["degrees"] <= 45.0
        assert seen == set(NoiseType)

    def test_frequencies_track_weights(self):
        gen = np.random.Generator(np.random.Philox(key=8))
        dist = NoiseDistribution.original()
        draws = 40_000
        counts = {t: 0 for t in NoiseType}
        for _ in range(draws):
            counts[sample_event(dist, gen).noise_type] += 1
        for noise_type, weight in dist.weights.items():
            assert counts[noise_type] / draws == pytest.approx(weight, abs=0.02)

    def test_event_roundtrips_through_json(self):
        gen = np.random.Generator(np.random.Philox(key=5))
        for _ in range(50):
            event = sample_event(NoiseDistribution.random(), gen)
            clone = NoiseEvent.from_dict(json.loads(json.dumps(event.to_dict())))
            assert clone == event


class TestApplyEvent:
    def test_every_type_preserves_contract(self, rng):
        gen = np.random.Generator(np.random.Philox(key=21))
        img = make_raster(rng, 36, 44)
        seen = set()
        while seen != set(NoiseType):
            event = sample_event(NoiseDistribution.random(), gen)
            seen.add(event.noise_type)
            out = apply_event(img, event)
            assert out.dtype == np.uint8 and out.ndim == 3 and out.shape[2] == 3
            assert out.shape[0] >= 1 and out.shape[1] >= 1

    def test_apply_is_deterministic(self, rng):
        gen = np.random.Generator(np.random.Philox(key=22))
        img = make_raster(rng)
        event = sample_event(NoiseDistribution.random(), gen)
        np.testing.assert_array_equal(apply_event(img, event),
                                      apply_event(img, event))


class TestAugmentDataset:
    def test_determinism_and_replay(self, image_corpus, tmp_path):
        records = load_dataset(image_corpus["dataset"])
        dist = NoiseDistribution.random()
        out_a = tmp_path / "aug_a"
        out_b = tmp_path / "aug_b"
        manifest_a = augment_dataset(records, dist, 7, out_a,
                                     images_root=image_corpus["root"])
        manifest_b = augment_dataset(records, dist, 7, out_b,
                                     images_root=image_corpus["root"], workers=4)

        assert (out_a / "manifest.json").read_bytes() == \
            (out_b / "manifest.json").read_bytes()
        assert len(manifest_a.events) == len(records)
        for entry_a, entry_b in zip(manifest_a.events, manifest_b.events):
            assert entry_a == entry_b
            bytes_a = (out_a / entry_a.output).read_bytes()
            assert bytes_a == (out_b / entry_b.output).read_bytes()

        # replaying the stored event reproduces the stored PNG bit-exactly
        reloaded = load_manifest(out_a / "manifest.json")
        by_id = {r.image_id: r for r in records}
        for entry in reloaded.events:
            src = load_raster(image_corpus["root"] / by_id[entry.image_id].image_path)
            replayed = apply_event(src, entry.event)
            np.testing.assert_array_equal(
                replayed, load_raster(out_a / entry.output)
            )

    def test_unreadable_image_becomes_error_entry(self, image_corpus, tmp_path):
        records = load_dataset(image_corpus["dataset"])
        bad = tmp_path / "broken.png"
        bad.write_bytes(b"not a png")
        records = records + [
            DatasetRecord(image_id="broken", captions=("cap",),
                          image_path=str(bad)),
        ]
        manifest = augment_dataset(records, NoiseDistribution.random(), 3,
                                   tmp_path / "aug",
                                   images_root=image_corpus["root"])
        assert len(manifest.events) == len(records) - 1
        assert len(manifest.errors) == 1
        assert manifest.errors[0]["image_id"] == "broken"

    def test_empty_record_list(self, tmp_path):
        manifest = augment_dataset([], NoiseDistribution.random(), 1,
                                   tmp_path / "aug")
        assert manifest.events == () and manifest.errors == ()

    def test_manifest_schema(self, image_corpus, tmp_path):
        records = load_dataset(image_corpus["dataset"])
        augment_dataset(records, NoiseDistribution.frequent(), 13,
                        tmp_path / "aug", images_root=image_corpus["root"])
        doc = json.loads((tmp_path / "aug" / "manifest.json").read_text())
        assert set(doc) == {"seed", "distribution", "events"}
        assert doc["seed"] == 13 and doc["distribution"] == "frequent"
        for event in doc["events"]:
            assert set(event) == {"image_id", "type", "params", "seed", "output"}

    def test_augmented_records_inherit_captions(self, image_corpus, tmp_path):
        records = load_dataset(image_corpus["dataset"])
        manifest = augment_dataset(records, NoiseDistribution.random(), 5,
                                   tmp_path / "aug",
                                   images_root=image_corpus["root"])
        copies = augmented_records(records, manifest)
        assert len(copies) == len(records)
        for original, copy in zip(records, copies):
            assert copy.captions == original.captions
            assert copy.image_id != original.image_id

    def test_type_counts_near_expectation(self, tmp_path, rng):
        # binomial 3-sigma band around 125 per type on a 1000-image corpus
        # (checked on per-image rng draws; no files involved)
        dist = NoiseDistribution.random()
        counts = {t: 0 for t in NoiseType}
        for i in range(1000):
            gen = per_image_rng(42, f"img{i}")
            counts[sample_event(dist, gen).noise_type] += 1
        sigma = math.sqrt(1000 * 0.125 * 0.875)
        for noise_type in NoiseType:
            assert abs(counts[noise_type] - 125) <= 3 * sigma
