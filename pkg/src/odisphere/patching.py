"""Overlapping tangent-patch extraction from ERP rasters and the inverse
reprojection that fuses per-patch saliency back into ERP with overlap
averaging.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import (
    TWO_PI,
    HALF_PI,
    Direction,
    ViewFrustum,
    erp_direction_vectors,
    patch_coords_to_direction,
    sphere_to_erp,
    tangent_basis,
    wrap_azimuth,
    EDGE_TOL,
)
from .interp import bilinear_wrap_sample, nearest_wrap_sample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Patch:
    """An undistorted tangent-plane raster extracted through a frustum."""

    frustum: ViewFrustum
    data: np.ndarray  # (H, W) or (H, W, C)

    def __post_init__(self):
        w, h = self.frustum.size
        if self.data.shape[0] != h or self.data.shape[1] != w:
            raise ConfigError(
                f"patch data shape {self.data.shape} does not match frustum size {(w, h)}"
            )


@dataclass(frozen=True)
class DirectionGrid:
    """Viewing directions generated at a fixed angular interval."""

    interval: float
    directions: tuple[Direction, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.directions)

    def __iter__(self):
        return iter(self.directions)


def generate_view_directions(interval: float) -> DirectionGrid:
    """Directions at a fixed interval: azimuth rings at every elevation step
    strictly between the poles, plus the two poles once each (azimuth 0).

    ``interval`` must divide the full circle. A 45-degree interval yields
    26 directions: 8 azimuths at elevations {-45, 0, +45} degrees plus the
    two poles.
    """
    interval = float(interval)
    if not 0.0 < interval <= math.pi:
        raise ConfigError(f"direction interval must lie in (0, pi], got {interval!r}")
    n_az = TWO_PI / interval
    n_az_int = round(n_az)
    if n_az_int < 1 or abs(n_az - n_az_int) > 1e-9 * n_az_int:
        raise ConfigError(
            f"direction interval {interval!r} rad does not divide the full circle"
        )
    # Highest elevation ring strictly below the pole.
    k_max = int(math.floor(HALF_PI / interval - 1e-9))
    azimuths = sorted(float(wrap_azimuth(k * interval)) for k in range(n_az_int))
    dirs: list[Direction] = [Direction(0.0, -HALF_PI)]
    for k in range(-k_max, k_max + 1):
        el = k * interval
        dirs.extend(Direction(az, el) for az in azimuths)
    dirs.append(Direction(0.0, HALF_PI))
    return DirectionGrid(interval=interval, directions=tuple(dirs))


def _check_erp(erp: np.ndarray) -> np.ndarray:
    erp = np.asarray(erp)
    if erp.ndim not in (2, 3) or erp.shape[0] < 2 or erp.shape[1] < 2:
        raise ConfigError(f"ERP grid must be (rows>=2, cols>=2[, channels]), got {erp.shape}")
    if not np.all(np.isfinite(erp)):
        raise ConfigError("ERP grid contains non-finite values")
    return erp


def extract_patch(erp: np.ndarray, f: ViewFrustum, sampler: str = "bilinear") -> Patch:
    """Extract the undistorted patch seen through ``f`` from an ERP raster.

    Each patch pixel is sampled at the ERP coordinates of its direction.
    Bilinear sampling wraps across the azimuth seam and clamps at the poles;
    nearest sampling is kept for exact-value tests.
    """
    erp = _check_erp(erp)
    w, h = f.size
    ys, xs = np.mgrid[0:h, 0:w]
    az, el = patch_coords_to_direction(f, xs.astype(float), ys.astype(float))
    row, col = sphere_to_erp(erp.shape[:2], az, el)
    if sampler == "bilinear":
        data = bilinear_wrap_sample(erp, row, col)
    elif sampler == "nearest":
        data = nearest_wrap_sample(erp, row, col)
    else:
        raise ConfigError(f"unknown sampler {sampler!r}")
    return Patch(frustum=f, data=data)


def reproject_average(
    patches: list[tuple[np.ndarray, ViewFrustum]] | list[Patch],
    erp_size,
    return_counts: bool = False,
):
    """Fuse per-patch maps into an ERP raster by nearest-point lookup and
    overlap averaging.

    Every ERP pixel collects the nearest patch sample from each frustum whose
    forward field of view contains the pixel's direction; the output is the
    arithmetic mean of the collected values. Pixels covered by no patch are
    set to 0 (and reported via a warning).
    """
    items: list[tuple[np.ndarray, ViewFrustum]] = []
    for p in patches:
        if isinstance(p, Patch):
            items.append((p.data, p.frustum))
        else:
            items.append((np.asarray(p[0]), p[1]))
    if not items:
        raise ConfigError("reproject_average needs at least one patch")

    rows, cols = int(erp_size[0]), int(erp_size[1])
    vecs = erp_direction_vectors((rows, cols)).reshape(-1, 3)
    acc = np.zeros(rows * cols, dtype=float)
    cnt = np.zeros(rows * cols, dtype=np.int64)

    for data, f in items:
        if data.ndim != 2:
            raise ConfigError("reprojection expects single-channel patch maps")
        w, h = f.size
        if data.shape != (h, w):
            raise ConfigError(
                f"patch map shape {data.shape} does not match frustum size {(w, h)}"
            )
        bx, by, bz = tangent_basis(f.direction)
        d = vecs @ bz
        front = d > 0.0
        t = np.empty_like(d)
        t[front] = f.focal / d[front]
        x = t[front] * (vecs[front] @ bx) + (w - 1) / 2.0
        y = t[front] * (vecs[front] @ by) + (h - 1) / 2.0
        inside = (
            (x >= -EDGE_TOL) & (x <= w - 1 + EDGE_TOL) & (y >= -EDGE_TOL) & (y <= h - 1 + EDGE_TOL)
        )
        sel = np.flatnonzero(front)[inside]
        xi = np.clip(np.rint(x[inside]).astype(np.int64), 0, w - 1)
        yi = np.clip(np.rint(y[inside]).astype(np.int64), 0, h - 1)
        acc[sel] += data[yi, xi]
        cnt[sel] += 1

    covered = cnt > 0
    out = np.zeros(rows * cols, dtype=float)
    out[covered] = acc[covered] / cnt[covered]
    n_uncovered = int(np.count_nonzero(~covered))
    if n_uncovered:
        logger.warning("reproject_average: %d of %d ERP pixels uncovered", n_uncovered, out.size)
    out = out.reshape(rows, cols)
    if return_counts:
        return out, cnt.reshape(rows, cols)
    return out
