import math

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from odisphere.errors import ConfigError, DegenerateInputError, FormatError
from odisphere.pfm import write_pfm
from odisphere.saliency import (
    BIAS_FLOOR,
    BiasGrid,
    ContrastBackend,
    FileBackend,
    apply_bias,
    l1_normalize,
    select_bias_channel,
    upsample_bias_channel,
)

from oracles import gaussian_blur_loops


class TestContrastBackend:
    def test_constant_patch_gives_zero(self):
        backend = ContrastBackend()
        out = backend.predict(np.full((40, 40), 0.7))
        assert np.abs(out.saliency).max() <= 1e-12

    def test_single_bright_pixel_peaks_there(self):
        backend = ContrastBackend()
        img = np.zeros((41, 41))
        img[13, 27] = 1.0
        out = backend.predict(img)
        assert np.unravel_index(np.argmax(out.saliency), out.saliency.shape) == (13, 27)
        assert np.all(out.saliency >= 0)

    def test_blobs_detected_at_matching_scale_pairs(self):
        # direct filter-response oracle: compare the per-pair responses of a
        # small and a large Gaussian blob computed with a naive separable blur
        backend = ContrastBackend()
        y, x = np.mgrid[0:96, 0:96].astype(float)
        small = np.exp(-((y - 24) ** 2 + (x - 24) ** 2) / (2 * 1.5**2))
        large = np.exp(-((y - 70) ** 2 + (x - 70) ** 2) / (2 * 12.0**2))
        img = small + large
        out = backend.predict(img)
        feats = out.features
        fine, coarse = feats[0], feats[2]
        assert fine[24, 24] > fine[70, 70]
        assert coarse[70, 70] > coarse[24, 24]
        # oracle agreement for the fine pair on the same image
        oracle = np.abs(gaussian_blur_loops(img, 1.0) - gaussian_blur_loops(img, 4.0))
        assert np.abs(oracle - fine).max() <= 1e-10

    def test_rgb_and_gray_supported(self):
        backend = ContrastBackend()
        rng = np.random.default_rng(0)
        gray = rng.uniform(0, 1, (32, 32))
        rgb = rng.uniform(0, 1, (32, 32, 3))
        for img in (gray, rgb):
            out = backend.predict(img)
            assert out.saliency.shape == (32, 32)
            assert out.features.shape == (6, 32, 32)

    def test_empty_patch_rejected(self):
        with pytest.raises(ConfigError):
            ContrastBackend().predict(np.zeros((0, 0)))

    def test_not_normalized(self):
        backend = ContrastBackend()
        rng = np.random.default_rng(1)
        out = backend.predict(rng.uniform(0, 5, (32, 32)))
        assert out.saliency.sum() != pytest.approx(1.0)


class TestFileBackend:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        stored = rng.uniform(0, 1, (24, 24)).astype(np.float32)
        write_pfm(tmp_path / "d0_a100.pfm", stored)
        backend = FileBackend(tmp_path)
        out = backend.predict(np.zeros((24, 24)), patch_id="d0_a100")
        assert np.array_equal(out.saliency, stored.astype(float))

    def test_missing_file(self, tmp_path):
        backend = FileBackend(tmp_path)
        with pytest.raises(FormatError):
            backend.predict(np.zeros((8, 8)), patch_id="d9_a100")

    def test_dimension_mismatch(self, tmp_path):
        write_pfm(tmp_path / "d0_a100.pfm", np.ones((10, 10), dtype=np.float32))
        backend = FileBackend(tmp_path)
        with pytest.raises(FormatError):
            backend.predict(np.zeros((24, 24)), patch_id="d0_a100")

    def test_negative_values_rejected(self, tmp_path):
        bad = -np.ones((8, 8), dtype=np.float32)
        write_pfm(tmp_path / "d0_a100.pfm", bad)
        backend = FileBackend(tmp_path)
        with pytest.raises(FormatError):
            backend.predict(np.zeros((8, 8)), patch_id="d0_a100")

    def test_requires_patch_id(self, tmp_path):
        with pytest.raises(ConfigError):
            FileBackend(tmp_path).predict(np.zeros((8, 8)))


class TestBiasChannelSelection:
    def test_exact_match(self):
        bias = BiasGrid.uniform()
        assert select_bias_channel(bias, 0.0) == 2
        assert select_bias_channel(bias, math.radians(45)) == 3
        assert select_bias_channel(bias, math.radians(-90)) == 0

    def test_nearest(self):
        bias = BiasGrid.uniform()
        assert select_bias_channel(bias, math.radians(30)) == 3
        assert select_bias_channel(bias, math.radians(-60)) == 1

    def test_tie_breaks_toward_equator(self):
        bias = BiasGrid.uniform()
        assert select_bias_channel(bias, math.radians(22.5)) == 2
        assert select_bias_channel(bias, math.radians(-22.5)) == 2
        assert select_bias_channel(bias, math.radians(67.5)) == 3

    def test_single_channel(self):
        bias = BiasGrid.uniform_center()
        assert select_bias_channel(bias, 1.2) == 0


class TestApplyBias:
    def test_all_ones_is_identity(self):
        rng = np.random.default_rng(3)
        raw = rng.uniform(0, 2, (60, 50))
        out = apply_bias(raw, BiasGrid.uniform(), 0.3)
        assert np.abs(out - raw).max() <= 1e-15

    def test_uniform_scale_cancels_after_normalization(self):
        rng = np.random.default_rng(4)
        raw = rng.uniform(0.1, 2, (40, 40))
        bias = BiasGrid.uniform()
        bias.weights *= 3.7
        out = apply_bias(raw, bias, 0.0)
        assert np.allclose(out, 3.7 * raw)
        assert np.allclose(l1_normalize(out), l1_normalize(raw))

    def test_hot_cell_against_upsample_oracle(self):
        bias = BiasGrid.uniform((20, 20))
        bias.weights[2, 7, 11] = 5.0
        raw = np.ones((100, 100))
        out = apply_bias(raw, bias, 0.0)
        oracle = upsample_bias_channel(bias, 2, (100, 100))
        assert np.array_equal(out, oracle)
        # the bump is smooth, positive, and centered near the hot cell
        peak = np.unravel_index(np.argmax(out), out.shape)
        assert abs(peak[0] - (7 + 0.5) * 5) <= 3
        assert abs(peak[1] - (11 + 0.5) * 5) <= 3
        assert out.max() <= 5.0 + 1e-12
        assert out.min() >= 1.0 - 1e-12

    def test_negative_raw_rejected(self):
        with pytest.raises(ConfigError):
            apply_bias(-np.ones((8, 8)), BiasGrid.uniform(), 0.0)

    def test_grid_shape_matching_patch_used_directly(self):
        rng = np.random.default_rng(5)
        bias = BiasGrid(rng.uniform(0.5, 1.5, (1, 8, 8)), np.zeros(1))
        raw = rng.uniform(0, 1, (8, 8))
        out = apply_bias(raw, bias, 0.0)
        assert np.array_equal(out, raw * bias.weights[0])


class TestBiasGrid:
    def test_negative_weights_rejected(self):
        with pytest.raises(ConfigError):
            BiasGrid(-np.ones((1, 4, 4)), np.zeros(1))

    def test_clamp_floor(self):
        bias = BiasGrid.uniform((4, 4))
        bias.weights[:] = 0.0
        bias.clamp()
        assert np.all(bias.weights >= BIAS_FLOOR)


class TestL1Normalize:
    def test_pair(self):
        out = l1_normalize(np.array([[2.0, 2.0]]))
        assert np.array_equal(out, np.array([[0.5, 0.5]]))

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        m = l1_normalize(rng.uniform(0, 1, (16, 16)))
        again = l1_normalize(m)
        assert np.abs(again - m).max() <= 1e-15

    def test_scale_invariant(self):
        rng = np.random.default_rng(7)
        m = rng.uniform(0, 1, (16, 16))
        assert np.allclose(l1_normalize(m), l1_normalize(7.0 * m))

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateInputError):
            l1_normalize(np.zeros((4, 4)))

    def test_sphere_weighted_variant(self):
        rng = np.random.default_rng(8)
        m = rng.uniform(0, 1, (16, 32))
        from odisphere.geometry import solid_angle_weights

        w = solid_angle_weights(m.shape)
        out = l1_normalize(m, sphere_weights=w)
        assert (out * w).sum() == pytest.approx(1.0, abs=1e-12)

    def test_argmax_invariant_under_scaling(self):
        rng = np.random.default_rng(9)
        m = rng.uniform(0, 1, (16, 16))
        a = np.argmax(l1_normalize(m))
        b = np.argmax(l1_normalize(123.4 * m))
        assert a == b


def test_scipy_blur_matches_loop_oracle():
    rng = np.random.default_rng(10)
    img = rng.uniform(0, 1, (24, 24))
    for sigma in (1.0, 2.0, 4.0):
        assert np.abs(gaussian_filter(img, sigma) - gaussian_blur_loops(img, sigma)).max() <= 1e-12
