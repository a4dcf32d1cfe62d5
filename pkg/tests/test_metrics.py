import math

import numpy as np
import pytest

from odisphere.errors import ConfigError, DegenerateInputError, FormatError
from odisphere.geometry import solid_angle_weights
from odisphere.metrics import (
    FixationSet,
    auc_judd,
    cc,
    evaluate,
    kld_metric,
    nss,
    nss_by_elevation,
    read_fixations,
    zscore_map,
)

from oracles import auc_judd_loops, cc_loops, kld_loops, nss_loops


def random_instance(rng, rows=16, cols=32, n_fix=8):
    mp = rng.uniform(0.0, 1.0, (rows, cols))
    az = rng.uniform(-math.pi, math.pi * (1 - 1e-9), n_fix)
    el = rng.uniform(-math.pi / 2, math.pi / 2, n_fix)
    return mp, FixationSet(az, el), list(zip(az, el))


class TestNss:
    def test_single_fixation_reads_zscore(self):
        # 2x2 grid has equal solid-angle weights; map [2,0,0,0]
        mp = np.array([[2.0, 0.0], [0.0, 0.0]])
        fix = FixationSet.from_degrees([-90.0], [45.0])  # center of pixel (0, 0)
        assert nss(mp, fix) == pytest.approx(1.7320508075688772, abs=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            mp, fix, pts = random_instance(rng)
            assert nss(mp, fix) == pytest.approx(nss_loops(mp, pts), abs=1e-9)

    def test_uniform_fixations_drive_nss_to_zero(self):
        # Monte-Carlo oracle: directions uniform w.r.t. solid angle
        rng = np.random.default_rng(1)
        mp = rng.uniform(0, 1, (32, 64))
        n = 100_000
        az = rng.uniform(-math.pi, math.pi * (1 - 1e-12), n)
        el = np.arcsin(rng.uniform(-1, 1, n))
        assert abs(nss(mp, FixationSet(az, el))) <= 0.05

    def test_constant_map_rejected(self):
        with pytest.raises(DegenerateInputError):
            nss(np.ones((8, 8)), FixationSet([0.0], [0.0]))

    def test_affine_invariance(self):
        rng = np.random.default_rng(2)
        mp, fix, _ = random_instance(rng)
        assert nss(3.2 * mp + 1.1, fix) == pytest.approx(nss(mp, fix), abs=1e-9)


class TestAucJudd:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            mp, fix, pts = random_instance(rng)
            assert auc_judd(mp, fix) == pytest.approx(auc_judd_loops(mp, pts), abs=1e-6)

    def test_constant_map_is_chance(self):
        fix = FixationSet.from_degrees([10.0, -50.0, 120.0], [5.0, -30.0, 60.0])
        assert auc_judd(np.full((16, 32), 0.4), fix) == pytest.approx(0.5, abs=1e-6)

    def test_perfect_map_near_one(self):
        rng = np.random.default_rng(4)
        mp = rng.uniform(0.0, 0.5, (16, 32))
        fix = FixationSet.from_degrees([0.0, 90.0, -90.0], [0.0, 30.0, -30.0])
        from odisphere.metrics import _fixation_pixels

        r, c = _fixation_pixels(mp, fix)
        mp[r, c] = [3.0, 2.9, 2.8]  # unique maxima exactly at fixations
        assert auc_judd(mp, fix) >= 0.99

    def test_anticorrelated_map_near_zero(self):
        # the Judd curve is anchored at (0, 0), so driving AUC below 0.01
        # needs enough fixations: the floor is 1/(2n)
        rng = np.random.default_rng(5)
        mp = rng.uniform(0.5, 1.0, (16, 32))
        n = 100
        az_deg = np.linspace(-180.0, 180.0, n, endpoint=False)
        el_deg = np.tile([-20.0, -10.0, 0.0, 10.0, 20.0], n // 5)
        fix = FixationSet.from_degrees(az_deg, el_deg)
        from odisphere.metrics import _fixation_pixels

        r, c = _fixation_pixels(mp, fix)
        mp[r, c] = np.linspace(0.0, 0.001, n)  # minima exactly at fixations
        assert auc_judd(mp, fix) <= 0.01

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(6)
        mp, fix, _ = random_instance(rng)
        assert auc_judd(np.exp(2.0 * mp), fix) == pytest.approx(auc_judd(mp, fix), abs=1e-12)


class TestCc:
    def test_self_correlation(self):
        rng = np.random.default_rng(7)
        mp = rng.uniform(0, 1, (16, 32))
        assert cc(mp, mp) == pytest.approx(1.0, abs=1e-12)

    def test_affine_gives_sign(self):
        rng = np.random.default_rng(8)
        mp = rng.uniform(0, 1, (16, 32))
        assert cc(mp, 2.5 * mp + 0.3) == pytest.approx(1.0, abs=1e-12)
        assert cc(mp, -1.5 * mp + 4.0) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            a = rng.uniform(0, 1, (16, 32))
            b = rng.uniform(0, 1, (16, 32))
            assert cc(a, b) == pytest.approx(cc_loops(a, b), abs=1e-9)

    def test_constant_rejected(self):
        with pytest.raises(DegenerateInputError):
            cc(np.ones((8, 8)), np.random.default_rng(0).uniform(0, 1, (8, 8)))


class TestKldMetric:
    def test_identical_maps(self):
        rng = np.random.default_rng(10)
        mp = rng.uniform(0.1, 1, (16, 32))
        assert abs(kld_metric(mp, mp)) <= 1e-10

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            p = rng.uniform(0.0, 1.0, (16, 32))
            g = rng.uniform(0.0, 1.0, (16, 32))
            assert kld_metric(p, g) == pytest.approx(kld_loops(p, g), abs=1e-12)

    def test_permutation_of_rows_with_weights(self):
        # relabeling invariance: swapping two rows at mirrored latitudes keeps
        # the weights aligned, so the value must not change
        rng = np.random.default_rng(12)
        p = rng.uniform(0.1, 1.0, (16, 32))
        g = rng.uniform(0.1, 1.0, (16, 32))
        ps = p[::-1].copy()
        gs = g[::-1].copy()
        assert kld_metric(ps, gs) == pytest.approx(kld_metric(p, g), abs=1e-12)

    def test_direction_flag(self):
        rng = np.random.default_rng(13)
        p = rng.uniform(0.1, 1.0, (16, 32))
        g = rng.uniform(0.1, 1.0, (16, 32))
        assert kld_metric(p, g, reference="pred") == pytest.approx(
            kld_metric(g, p, reference="gt"), abs=1e-12
        )

    def test_non_negative_up_to_epsilon(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            p = rng.uniform(0.0, 1.0, (8, 16))
            g = rng.uniform(0.0, 1.0, (8, 16))
            assert kld_metric(p, g) >= -1e-6


class TestRotationInvariance:
    def test_all_metrics_invariant_under_column_roll(self):
        rng = np.random.default_rng(15)
        mp = rng.uniform(0, 1, (16, 32))
        gt = rng.uniform(0, 1, (16, 32))
        az = rng.uniform(-math.pi, math.pi * 0.99, 6)
        el = rng.uniform(-math.pi / 2, math.pi / 2, 6)
        fix = FixationSet(az, el)
        k = 7
        shift = k * 2 * math.pi / 32
        az2 = np.mod(az + shift + math.pi, 2 * math.pi) - math.pi
        fix2 = FixationSet(az2, el)
        mp2 = np.roll(mp, k, axis=1)
        gt2 = np.roll(gt, k, axis=1)
        assert nss(mp2, fix2) == pytest.approx(nss(mp, fix), abs=1e-9)
        assert auc_judd(mp2, fix2) == pytest.approx(auc_judd(mp, fix), abs=1e-9)
        assert cc(mp2, gt2) == pytest.approx(cc(mp, gt), abs=1e-9)
        assert kld_metric(mp2, gt2) == pytest.approx(kld_metric(mp, gt), abs=1e-9)


class TestNssByElevation:
    def test_single_band_equals_global(self):
        rng = np.random.default_rng(16)
        mp = rng.uniform(0, 1, (32, 64))
        fix = FixationSet.from_degrees([10.0, 20.0, -15.0], [5.0, 10.0, 1.0])
        bands = nss_by_elevation(mp, fix, math.radians(30))
        assert len(bands) == 1
        assert bands[0][1] == pytest.approx(nss(mp, fix), abs=1e-12)

    def test_empty_bands_absent(self):
        rng = np.random.default_rng(17)
        mp = rng.uniform(0, 1, (32, 64))
        fix = FixationSet.from_degrees([0.0, 0.0], [80.0, -80.0])
        bands = nss_by_elevation(mp, fix, math.radians(30))
        assert len(bands) == 2
        centers = sorted(math.degrees(c) for c, _ in bands)
        assert centers == pytest.approx([-75.0, 75.0], abs=1e-9)

    def test_equator_band_beats_pole_band_on_equator_map(self):
        rows, cols = 32, 64
        r = np.arange(rows, dtype=float)
        el = (0.5 - (r + 0.5) / rows) * math.pi
        mp = np.tile(np.exp(-(el[:, None] ** 2)), (1, cols))
        rng = np.random.default_rng(18)
        az = rng.uniform(-math.pi, math.pi * 0.99, 40)
        el_eq = rng.uniform(-0.1, 0.1, 20)
        el_pole = rng.uniform(1.2, 1.4, 20)
        fix = FixationSet(az, np.concatenate([el_eq, el_pole]))
        bands = dict((round(math.degrees(c)), v) for c, v in nss_by_elevation(mp, fix, math.radians(30)))
        eq_band = bands[0] if 0 in bands else bands[15]
        pole_band = max(v for c, v in bands.items() if c > 60)
        assert eq_band > pole_band


class TestFixationIO:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "fix.csv"
        path.write_text("# comment\n10.5,-20.25\n-179.99,89.5\n", encoding="utf-8")
        fix = read_fixations(path)
        assert len(fix) == 2
        assert fix.azimuths[0] == pytest.approx(math.radians(10.5))
        assert fix.weights is None

    def test_weights_column(self, tmp_path):
        path = tmp_path / "fix.csv"
        path.write_text("0,0,2.0\n90,45,1.0\n", encoding="utf-8")
        fix = read_fixations(path)
        assert np.allclose(fix.point_weights(), [2 / 3, 1 / 3])

    def test_azimuth_range_enforced(self, tmp_path):
        path = tmp_path / "fix.csv"
        path.write_text("180.0,0\n", encoding="utf-8")
        with pytest.raises(FormatError):
            read_fixations(path)

    def test_inconsistent_columns(self, tmp_path):
        path = tmp_path / "fix.csv"
        path.write_text("0,0\n1,1,1\n", encoding="utf-8")
        with pytest.raises(FormatError):
            read_fixations(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "fix.csv"
        path.write_text("# nothing\n", encoding="utf-8")
        with pytest.raises(FormatError):
            read_fixations(path)


class TestEvaluate:
    def test_report_contents(self):
        rng = np.random.default_rng(19)
        mp = rng.uniform(0, 1, (16, 32))
        fix = FixationSet.from_degrees([10.0, -30.0], [0.0, 45.0])
        report = evaluate(mp, fix, gt_map=mp)
        assert report.cc == pytest.approx(1.0, abs=1e-12)
        assert report.kld == pytest.approx(0.0, abs=1e-10)
        assert report.nss is not None and report.auc is not None
        d = report.as_dict()
        assert d["metadata"]["nss_weighting"] == "solid-angle"
        assert d["metadata"]["auc_variant"] == "judd"

    def test_json_serializable(self):
        rng = np.random.default_rng(20)
        mp = rng.uniform(0, 1, (16, 32))
        report = evaluate(mp, FixationSet.from_degrees([0.0], [0.0]))
        import json

        parsed = json.loads(report.to_json())
        assert "nss" in parsed and "kld" in parsed


class TestZscore:
    def test_weighted_moments(self):
        rng = np.random.default_rng(21)
        mp = rng.uniform(0, 1, (16, 32))
        z = zscore_map(mp)
        w = solid_angle_weights(mp.shape)
        assert (w * z).sum() == pytest.approx(0.0, abs=1e-12)
        assert (w * z * z).sum() == pytest.approx(1.0, abs=1e-12)


class TestFixationValidation:
    def test_bad_ranges(self):
        with pytest.raises(ConfigError):
            FixationSet([4.0], [0.0])
        with pytest.raises(ConfigError):
            FixationSet([0.0], [2.0])

    def test_weight_shape(self):
        with pytest.raises(ConfigError):
            FixationSet([0.0, 0.1], [0.0, 0.0], [1.0])
