import logging
import math

import numpy as np
import pytest

from odisphere.errors import ConfigError
from odisphere.geometry import Direction, ViewFrustum, erp_to_sphere, patch_coords_to_direction, sphere_to_patch
from odisphere.patching import extract_patch, generate_view_directions, reproject_average


def analytic_field(rows, cols):
    """Smooth band-limited test field without the azimuth-seam discontinuity."""
    r, c = np.mgrid[0:rows, 0:cols]
    az, el = erp_to_sphere((rows, cols), r.astype(float), c.astype(float))
    return np.sin(az) * np.cos(el)


class TestDirectionGrid:
    def test_45_degrees_yields_26(self):
        grid = generate_view_directions(math.radians(45))
        assert len(grid) == 26
        elevations = sorted({round(math.degrees(d.elevation), 6) for d in grid})
        assert elevations == [-90.0, -45.0, 0.0, 45.0, 90.0]
        for ring_el in (-45.0, 0.0, 45.0):
            ring = [d for d in grid if math.degrees(d.elevation) == pytest.approx(ring_el)]
            assert len(ring) == 8

    def test_90_degrees_yields_6(self):
        grid = generate_view_directions(math.radians(90))
        assert len(grid) == 6

    def test_180_degrees_yields_4(self):
        grid = generate_view_directions(math.radians(180))
        assert len(grid) == 4

    def test_non_divisor_rejected(self):
        with pytest.raises(ConfigError):
            generate_view_directions(math.radians(50))

    def test_poles_present_once_each(self):
        grid = generate_view_directions(math.radians(45))
        poles = [d for d in grid if abs(d.elevation) == pytest.approx(math.pi / 2)]
        assert len(poles) == 2
        assert all(d.azimuth == 0.0 for d in poles)

    def test_deterministic_order(self):
        a = generate_view_directions(math.radians(45))
        b = generate_view_directions(math.radians(45))
        assert [(d.azimuth, d.elevation) for d in a] == [(d.azimuth, d.elevation) for d in b]


class TestExtractPatch:
    def test_constant_erp(self):
        erp = np.full((80, 160), 3.25)
        f = ViewFrustum(Direction(1.0, 0.5), math.radians(100), (64, 64))
        patch = extract_patch(erp, f)
        assert np.abs(patch.data - 3.25).max() == 0.0

    def test_analytic_field(self):
        rows, cols = 200, 400
        field = analytic_field(rows, cols)
        f = ViewFrustum(Direction(1.0, 0.3), math.radians(100), (128, 128))
        patch = extract_patch(field, f)
        ys, xs = np.mgrid[0:128, 0:128]
        az, el = patch_coords_to_direction(f, xs.astype(float), ys.astype(float))
        expected = np.sin(az) * np.cos(el)
        tol = 2 * (2 * math.pi / cols)
        assert np.abs(patch.data - expected).max() <= tol

    def test_seam_continuity(self):
        rows, cols = 200, 400
        field = analytic_field(rows, cols)
        f = ViewFrustum(Direction(math.pi - 1e-9, 0.0), math.radians(100), (64, 64))
        patch = extract_patch(field, f)
        # a wrap bug would show up as a jump of O(field range) between columns
        assert np.abs(np.diff(patch.data, axis=1)).max() < 0.1

    def test_nearest_sampler_exact_values(self):
        rng = np.random.default_rng(0)
        erp = rng.uniform(0, 1, (50, 100))
        f = ViewFrustum(Direction(0.0, 0.0), math.radians(90), (32, 32))
        patch = extract_patch(erp, f, sampler="nearest")
        assert set(np.unique(patch.data)).issubset(set(np.unique(erp)))

    def test_multichannel(self):
        rng = np.random.default_rng(1)
        erp = rng.uniform(0, 1, (50, 100, 3))
        f = ViewFrustum(Direction(0.2, 0.1), math.radians(90), (32, 32))
        patch = extract_patch(erp, f)
        assert patch.data.shape == (32, 32, 3)

    def test_bad_sampler(self):
        with pytest.raises(ConfigError):
            extract_patch(np.ones((10, 20)), ViewFrustum(Direction(0, 0), 1.0, (8, 8)), "cubic")


class TestReprojectAverage:
    def test_single_patch_nearest_value(self):
        rng = np.random.default_rng(2)
        data = rng.uniform(0, 1, (64, 64))
        f = ViewFrustum(Direction(0.0, 0.0), math.radians(100), (64, 64))
        out, cnt = reproject_average([(data, f)], (60, 120), return_counts=True)
        # inside pixels carry exact patch values, outside are zero
        assert set(np.unique(out[cnt == 0])) == {0.0}
        inside_vals = set(np.round(out[cnt == 1], 12))
        patch_vals = set(np.round(data.ravel(), 12))
        assert inside_vals.issubset(patch_vals)

    def test_two_overlapping_patches_average(self):
        f1 = ViewFrustum(Direction(0.0, 0.0), math.radians(100), (64, 64))
        f2 = ViewFrustum(Direction(0.3, 0.0), math.radians(100), (64, 64))
        out, cnt = reproject_average(
            [(np.full((64, 64), 0.2), f1), (np.full((64, 64), 0.4), f2)],
            (60, 120),
            return_counts=True,
        )
        assert np.any(cnt == 2)
        assert np.allclose(out[cnt == 2], 0.3)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        frusta = [
            ViewFrustum(Direction(az, el), math.radians(100), (32, 32))
            for az, el in [(0.0, 0.0), (0.8, 0.3), (-1.2, -0.5)]
        ]
        maps = [rng.uniform(0, 1, (32, 32)) for _ in frusta]
        a = reproject_average(list(zip(maps, frusta)), (40, 80))
        b = reproject_average(list(zip(maps, frusta))[::-1], (40, 80))
        assert np.array_equal(a, b)

    def test_constant_round_trip_on_covered(self):
        erp = np.full((60, 120), 1.7)
        grid = generate_view_directions(math.radians(90))
        patches = []
        for d in grid:
            f = ViewFrustum(d, math.radians(100), (48, 48))
            patches.append((extract_patch(erp, f).data, f))
        out, cnt = reproject_average(patches, (60, 120), return_counts=True)
        assert np.allclose(out[cnt > 0], 1.7)

    def test_uncovered_pixels_warn_and_zero(self, caplog):
        f = ViewFrustum(Direction(0.0, 0.0), math.radians(60), (16, 16))
        with caplog.at_level(logging.WARNING, logger="odisphere.patching"):
            out, cnt = reproject_average([(np.ones((16, 16)), f)], (30, 60), return_counts=True)
        assert np.any(cnt == 0)
        assert np.all(out[cnt == 0] == 0.0)
        assert any("uncovered" in rec.message for rec in caplog.records)

    def test_full_coverage_26_directions(self):
        grid = generate_view_directions(math.radians(45))
        patches = [
            (np.ones((64, 64)), ViewFrustum(d, math.radians(100), (64, 64))) for d in grid
        ]
        _, cnt = reproject_average(patches, (100, 200), return_counts=True)
        assert int((cnt == 0).sum()) == 0

    def test_empty_list_rejected(self):
        with pytest.raises(ConfigError):
            reproject_average([], (10, 20))

    def test_smooth_field_round_trip(self):
        rows, cols = 180, 360
        field = analytic_field(rows, cols)
        grid = generate_view_directions(math.radians(45))
        patches = []
        for d in grid:
            f = ViewFrustum(d, math.radians(100), (96, 96))
            patches.append((extract_patch(field, f).data, f))
        out, cnt = reproject_average(patches, (rows, cols), return_counts=True)
        assert int((cnt == 0).sum()) == 0
        r, c = np.mgrid[0:rows, 0:cols]
        _, el = erp_to_sphere((rows, cols), r.astype(float), c.astype(float))
        band = np.abs(el) <= math.radians(60)
        tol = 2 * (2 * math.pi / cols)
        assert np.abs(out - field)[band].max() <= tol

    def test_nearest_matches_scalar_projection(self):
        # cross-check the vectorized containment path against sphere_to_patch
        rng = np.random.default_rng(4)
        f = ViewFrustum(Direction(0.7, -0.2), math.radians(100), (32, 32))
        data = rng.uniform(0, 1, (32, 32))
        out, cnt = reproject_average([(data, f)], (40, 80), return_counts=True)
        r_idx = rng.integers(0, 40, 200)
        c_idx = rng.integers(0, 80, 200)
        for r, c in zip(r_idx, c_idx):
            az, el = erp_to_sphere((40, 80), float(r), float(c))
            xy = sphere_to_patch(f, Direction(float(az), float(el)))
            if xy is None:
                assert cnt[r, c] == 0
            else:
                assert cnt[r, c] == 1
                xi = min(max(int(round(xy[0])), 0), 31)
                yi = min(max(int(round(xy[1])), 0), 31)
                assert out[r, c] == pytest.approx(data[yi, xi])
