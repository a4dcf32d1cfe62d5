"""Sphere-uniform evaluation metrics for ODI saliency maps.

Pixel statistics are weighted by the solid angle each ERP pixel covers
(cos-latitude weights), so every metric behaves as if the sphere were
sampled uniformly rather than the distorted ERP rectangle.

Fixations are gaze directions; the file format is UTF-8 CSV with one
fixation per line: ``azimuth_deg,elevation_deg[,weight]``, azimuth in
[-180, 180), elevation in [-90, 90]. Lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateInputError, FormatError
from .geometry import HALF_PI, solid_angle_weights, sphere_to_erp
from .interp import bilinear_wrap_sample

KLD_EPS = 1e-8


@dataclass
class FixationSet:
    """Gaze points on the sphere, with optional per-point weights."""

    azimuths: np.ndarray
    elevations: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.azimuths = np.atleast_1d(np.asarray(self.azimuths, dtype=float))
        self.elevations = np.atleast_1d(np.asarray(self.elevations, dtype=float))
        if self.azimuths.shape != self.elevations.shape:
            raise ConfigError("azimuths and elevations must have identical length")
        if np.any(self.azimuths < -math.pi) or np.any(self.azimuths >= math.pi):
            raise ConfigError("fixation azimuths must lie in [-pi, pi)")
        if np.any(np.abs(self.elevations) > HALF_PI + 1e-12):
            raise ConfigError("fixation elevations must lie in [-pi/2, pi/2]")
        if self.weights is not None:
            self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
            if self.weights.shape != self.azimuths.shape:
                raise ConfigError("one weight per fixation is required")
            if np.any(self.weights < 0) or self.weights.sum() <= 0:
                raise ConfigError("fixation weights must be non-negative with positive sum")

    def __len__(self) -> int:
        return int(self.azimuths.size)

    @classmethod
    def from_degrees(cls, az_deg, el_deg, weights=None) -> "FixationSet":
        return cls(np.radians(az_deg), np.radians(el_deg), weights)

    def point_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self), 1.0 / len(self))
        return self.weights / self.weights.sum()


def read_fixations(path) -> FixationSet:
    """Parse the fixation CSV format described in the module docstring."""
    az, el, wt = [], [], []
    has_weight = None
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise FormatError(f"{path}:{ln}: expected 2 or 3 comma-separated values")
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"{path}:{ln}: non-numeric field") from exc
        if has_weight is None:
            has_weight = len(values) == 3
        elif has_weight != (len(values) == 3):
            raise FormatError(f"{path}:{ln}: inconsistent column count")
        if not -180.0 <= values[0] < 180.0:
            raise FormatError(f"{path}:{ln}: azimuth {values[0]} out of [-180, 180)")
        if not -90.0 <= values[1] <= 90.0:
            raise FormatError(f"{path}:{ln}: elevation {values[1]} out of [-90, 90]")
        az.append(values[0])
        el.append(values[1])
        if has_weight:
            wt.append(values[2])
    if not az:
        raise FormatError(f"{path}: no fixations found")
    try:
        return FixationSet.from_degrees(az, el, np.asarray(wt) if wt else None)
    except ConfigError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _check_map(mp: np.ndarray) -> np.ndarray:
    mp = np.asarray(mp, dtype=float)
    if mp.ndim != 2 or mp.shape[0] < 2 or mp.shape[1] < 2:
        raise ConfigError(f"expected a (rows>=2, cols>=2) map, got {mp.shape}")
    if not np.all(np.isfinite(mp)):
        raise ConfigError("map contains non-finite values")
    return mp


def _weighted_mean_std(mp: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    mean = float((w * mp).sum())
    var = float((w * (mp - mean) ** 2).sum())
    return mean, math.sqrt(max(var, 0.0))


def zscore_map(mp: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Solid-angle-weighted z-scoring of an ERP map."""
    mp = _check_map(mp)
    if w is None:
        w = solid_angle_weights(mp.shape)
    if mp.max() == mp.min():
        raise DegenerateInputError("constant map cannot be z-scored")
    mean, std = _weighted_mean_std(mp, w)
    if std <= 0.0:
        raise DegenerateInputError("constant map cannot be z-scored")
    return (mp - mean) / std


def _fixation_values(mp: np.ndarray, fix: FixationSet, mode: str = "bilinear") -> np.ndarray:
    row, col = sphere_to_erp(mp.shape, fix.azimuths, fix.elevations)
    if mode == "bilinear":
        return np.atleast_1d(bilinear_wrap_sample(mp, row, col))
    r = np.clip(np.rint(row).astype(np.int64), 0, mp.shape[0] - 1)
    c = np.mod(np.rint(col).astype(np.int64), mp.shape[1])
    return mp[r, c]


def nss(mp: np.ndarray, fix: FixationSet) -> float:
    """Mean z-scored saliency at the fixation directions."""
    if len(fix) == 0:
        raise ConfigError("NSS needs at least one fixation")
    z = zscore_map(mp)
    values = _fixation_values(z, fix, mode="bilinear")
    return float((fix.point_weights() * values).sum())


def _fixation_pixels(mp: np.ndarray, fix: FixationSet) -> tuple[np.ndarray, np.ndarray]:
    row, col = sphere_to_erp(mp.shape, fix.azimuths, fix.elevations)
    r = np.clip(np.rint(row).astype(np.int64), 0, mp.shape[0] - 1)
    c = np.mod(np.rint(col).astype(np.int64), mp.shape[1])
    return r, c


def auc_judd(mp: np.ndarray, fix: FixationSet) -> float:
    """ROC area with one threshold per fixated saliency value.

    True-positive rate counts fixations at or above the threshold;
    false-positive rate is the solid-angle-weighted fraction of the
    non-fixated sphere at or above it. This is the Judd variant; other AUC
    definitions differ, so comparisons must hold the variant fixed.
    """
    mp = _check_map(mp)
    if len(fix) == 0:
        raise ConfigError("AUC needs at least one fixation")
    w = solid_angle_weights(mp.shape)
    r, c = _fixation_pixels(mp, fix)
    s_fix = mp[r, c]
    non_fix = np.ones(mp.shape, dtype=bool)
    non_fix[r, c] = False
    w_non = w[non_fix]
    v_non = mp[non_fix]
    w_total = w_non.sum()
    points = [(0.0, 0.0), (1.0, 1.0)]
    for th in s_fix:
        tpr = float((s_fix >= th).mean())
        fpr = float(w_non[v_non >= th].sum() / w_total) if w_total > 0 else 0.0
        points.append((fpr, tpr))
    points.sort()
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return float(((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) * 0.5).sum())


def cc(map_a: np.ndarray, map_b: np.ndarray) -> float:
    """Solid-angle-weighted Pearson correlation of two maps."""
    a = _check_map(map_a)
    b = _check_map(map_b)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.max() == a.min() or b.max() == b.min():
        raise DegenerateInputError("correlation of a constant map is undefined")
    w = solid_angle_weights(a.shape)
    mean_a, std_a = _weighted_mean_std(a, w)
    mean_b, std_b = _weighted_mean_std(b, w)
    if std_a <= 0.0 or std_b <= 0.0:
        raise DegenerateInputError("correlation of a constant map is undefined")
    cov = float((w * (a - mean_a) * (b - mean_b)).sum())
    return cov / (std_a * std_b)


def kld_metric(pred: np.ndarray, gt: np.ndarray, eps: float = KLD_EPS, reference: str = "gt") -> float:
    """KL divergence between sphere-weighted normalized distributions.

    Default direction uses the ground truth as the reference distribution,
    matching the training loss convention; pass ``reference='pred'`` to flip.
    """
    p = _check_map(pred)
    g = _check_map(gt)
    if p.shape != g.shape:
        raise ConfigError(f"shape mismatch: {p.shape} vs {g.shape}")
    if np.any(p < 0) or np.any(g < 0):
        raise DegenerateInputError("KLD expects non-negative maps")
    w = solid_angle_weights(p.shape)
    pw = p * w
    gw = g * w
    sp, sg = float(pw.sum()), float(gw.sum())
    if sp <= 0.0 or sg <= 0.0:
        raise DegenerateInputError("KLD expects maps with positive sums")
    pn = pw / sp
    gn = gw / sg
    if reference == "gt":
        ref, other = gn, pn
    elif reference == "pred":
        ref, other = pn, gn
    else:
        raise ConfigError(f"reference must be 'gt' or 'pred', got {reference!r}")
    return float((ref * np.log((ref + eps) / (other + eps))).sum())


def nss_by_elevation(mp: np.ndarray, fix: FixationSet, band_width: float):
    """NSS per elevation band; z-scoring stays global, bands without
    fixations are omitted."""
    if band_width <= 0 or band_width > math.pi:
        raise ConfigError(f"band width must lie in (0, pi], got {band_width}")
    z = zscore_map(mp)
    values = _fixation_values(z, fix, mode="bilinear")
    pw = fix.point_weights()
    n_bands = int(math.ceil(math.pi / band_width - 1e-12))
    idx = np.minimum(
        ((fix.elevations + HALF_PI) / band_width).astype(np.int64), n_bands - 1
    )
    out = []
    for b in range(n_bands):
        mask = idx == b
        if not np.any(mask):
            continue
        lo = -HALF_PI + b * band_width
        hi = min(lo + band_width, HALF_PI)
        wsum = pw[mask].sum()
        out.append(((lo + hi) / 2.0, float((pw[mask] * values[mask]).sum() / wsum)))
    return out


@dataclass
class MetricReport:
    """Bundle of the four headline metrics plus the per-band NSS breakdown."""

    nss: float | None = None
    auc: float | None = None
    cc: float | None = None
    kld: float | None = None
    nss_per_band: list[tuple[float, float]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "nss": self.nss,
            "auc": self.auc,
            "cc": self.cc,
            "kld": self.kld,
            "nss_by_elevation": [
                {"band_center_deg": math.degrees(c), "nss": v} for c, v in self.nss_per_band
            ],
            "metadata": self.metadata,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.as_dict(), indent=indent)


def evaluate(
    pred: np.ndarray,
    fixations: FixationSet | None = None,
    gt_map: np.ndarray | None = None,
    band_width_deg: float = 30.0,
) -> MetricReport:
    """Compute every metric the provided ground truth allows."""
    report = MetricReport(
        metadata={
            "nss_weighting": "solid-angle",
            "auc_variant": "judd",
            "kld_reference": "gt",
        }
    )
    if fixations is not None:
        report.nss = nss(pred, fixations)
        report.auc = auc_judd(pred, fixations)
        report.nss_per_band = nss_by_elevation(pred, fixations, math.radians(band_width_deg))
    if gt_map is not None:
        report.cc = cc(pred, gt_map)
        report.kld = kld_metric(pred, gt_map)
    return report
