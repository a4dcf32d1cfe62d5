"""Coordinate conversions between equirectangular pixels, spherical directions,
3D unit vectors, and tangent-plane patch coordinates.

Conventions used throughout the toolkit:

* Directions are (azimuth, elevation) pairs in radians. Azimuth wraps into
  [-pi, pi); elevation is measured from the equator and clamped to
  [-pi/2, pi/2] (north pole at +pi/2).
* Equirectangular (ERP) rasters are row-major with north at the top and
  azimuth increasing left to right. The pixel-center convention applies:
  integer pixel (r, c) is centered at continuous coordinate (r, c), and
  column c maps to azimuth ((c + 0.5) / cols - 0.5) * 2*pi.
* Tangent patches use continuous coordinates with pixel centers at integers;
  the patch center sits at ((W-1)/2, (H-1)/2).

All functions are pure; scalar entry points have array-aware counterparts
used by the resampling code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

# Tolerance for containment tests against patch edges.
EDGE_TOL = 1e-9


def wrap_azimuth(theta):
    """Wrap azimuth(s) into [-pi, pi)."""
    return np.mod(np.asarray(theta) + math.pi, TWO_PI) - math.pi


@dataclass(frozen=True)
class Direction:
    """A viewing direction on the sphere: azimuth and elevation in radians."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        az = (float(self.azimuth) + math.pi) % TWO_PI - math.pi
        el = min(max(float(self.elevation), -HALF_PI), HALF_PI)
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)

    @classmethod
    def from_degrees(cls, azimuth_deg: float, elevation_deg: float) -> "Direction":
        return cls(math.radians(azimuth_deg), math.radians(elevation_deg))


def direction_to_vec(azimuth, elevation) -> np.ndarray:
    """3D unit vector of the view axis for a direction (array-aware).

    Defined so that it coincides with the third basis vector returned by
    :func:`tangent_basis`.
    """
    az, el = np.broadcast_arrays(
        np.asarray(azimuth, dtype=float), np.asarray(elevation, dtype=float)
    )
    ce = np.cos(el)
    v = np.stack(
        [-ce * np.cos(az), ce * np.sin(az), -np.sin(el)],
        axis=-1,
    )
    return v


def vec_to_direction(v) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`direction_to_vec`; accepts non-unit vectors."""
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    az = np.arctan2(y, -x)
    el = np.arctan2(-z, np.hypot(x, y))
    return az, el


def tangent_basis(d: Direction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal basis (X, Y, Z) of the tangent image plane at direction d.

    X points along increasing patch x, Y along increasing patch y (downward,
    toward lower elevations), and Z = X x Y is the view axis.
    """
    st, ct = math.sin(d.azimuth), math.cos(d.azimuth)
    sp, cp = math.sin(d.elevation), math.cos(d.elevation)
    x = np.array([-st, -ct, 0.0])
    y = np.array([-sp * ct, sp * st, cp])
    # Closed form of the cross product x × y.
    z = np.array([-cp * ct, cp * st, -sp])
    return x, y, z


def focal_length(aov: float, size: float) -> float:
    """Distance from the projection center to the image plane, in pixels.

    Satisfies tan(aov / 2) = size / (2 * L) for the given axis.
    """
    if not 0.0 < aov < math.pi:
        raise ConfigError(f"angle of view must lie in (0, pi), got {aov!r}")
    return size / (2.0 * math.tan(aov / 2.0))


@dataclass(frozen=True)
class ViewFrustum:
    """A tangent patch: viewing direction, angles of view, and pixel size.

    ``aov`` may be a single angle (square semantics: the vertical angle is
    derived from the shared focal length) or an explicit (horizontal,
    vertical) pair, which must be consistent with a single focal length.
    ``size`` is (W, H) in pixels.
    """

    direction: Direction
    aov: tuple[float, float]
    size: tuple[int, int]

    def __post_init__(self):
        w, h = int(self.size[0]), int(self.size[1])
        if w < 2 or h < 2:
            raise ConfigError(f"patch size must be >= 2 pixels per axis, got {(w, h)}")
        if isinstance(self.aov, (int, float)):
            aov_x = float(self.aov)
            lx = focal_length(aov_x, w)
            aov_y = 2.0 * math.atan(h / (2.0 * lx))
        else:
            aov_x, aov_y = (float(a) for a in self.aov)
            lx = focal_length(aov_x, w)
            ly = focal_length(aov_y, h)
            if abs(lx - ly) > 1e-6 * max(lx, ly):
                raise ConfigError(
                    "angles of view are inconsistent with a single focal length: "
                    f"L_x={lx:.6f}, L_y={ly:.6f}"
                )
        if not 0.0 < aov_y < math.pi:
            raise ConfigError(f"vertical angle of view out of range: {aov_y!r}")
        object.__setattr__(self, "aov", (aov_x, aov_y))
        object.__setattr__(self, "size", (w, h))

    @property
    def focal(self) -> float:
        return focal_length(self.aov[0], self.size[0])

    @property
    def center(self) -> tuple[float, float]:
        return (self.size[0] - 1) / 2.0, (self.size[1] - 1) / 2.0


def patch_coords_to_direction(f: ViewFrustum, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Directions of continuous patch coordinates (array-aware)."""
    bx, by, bz = tangent_basis(f.direction)
    cx, cy = f.center
    dx = np.asarray(x, dtype=float) - cx
    dy = np.asarray(y, dtype=float) - cy
    l = f.focal
    px = l * bz[0] + dx * bx[0] + dy * by[0]
    py = l * bz[1] + dx * bx[1] + dy * by[1]
    pz = l * bz[2] + dx * bx[2] + dy * by[2]
    return vec_to_direction(np.stack([px, py, pz], axis=-1))


def patch_to_sphere(f: ViewFrustum, xy: tuple[float, float]) -> Direction:
    """Direction of a single continuous patch coordinate."""
    az, el = patch_coords_to_direction(f, xy[0], xy[1])
    return Direction(float(az), float(el))


def project_to_patch(f: ViewFrustum, azimuth, elevation):
    """Project directions onto a frustum's patch plane (array-aware).

    Returns (x, y, inside) where ``inside`` is True for directions in the
    forward half-space that land within the patch rectangle
    [0, W-1] x [0, H-1]. Coordinates are NaN outside the forward half-space.
    """
    bx, by, bz = tangent_basis(f.direction)
    v = direction_to_vec(azimuth, elevation)
    d = v @ bz
    front = d > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(front, f.focal / np.where(front, d, 1.0), np.nan)
    cx, cy = f.center
    x = t * (v @ bx) + cx
    y = t * (v @ by) + cy
    w, h = f.size
    inside = (
        front
        & (x >= -EDGE_TOL)
        & (x <= w - 1 + EDGE_TOL)
        & (y >= -EDGE_TOL)
        & (y <= h - 1 + EDGE_TOL)
    )
    return x, y, inside


def sphere_to_patch(f: ViewFrustum, d: Direction):
    """Patch coordinates of a direction, or None when outside the frustum."""
    x, y, inside = project_to_patch(f, d.azimuth, d.elevation)
    if not bool(inside):
        return None
    return float(x), float(y)


def _check_erp_size(erp_size) -> tuple[int, int]:
    rows, cols = int(erp_size[0]), int(erp_size[1])
    if rows < 2 or cols < 2:
        raise ConfigError(f"ERP size must be >= 2 per axis, got {(rows, cols)}")
    return rows, cols


def erp_to_sphere(erp_size, row, col):
    """Directions of continuous ERP pixel coordinates (array-aware)."""
    rows, cols = _check_erp_size(erp_size)
    az = wrap_azimuth(((np.asarray(col, dtype=float) + 0.5) / cols - 0.5) * TWO_PI)
    el = np.clip((0.5 - (np.asarray(row, dtype=float) + 0.5) / rows) * math.pi, -HALF_PI, HALF_PI)
    return az, el


def sphere_to_erp(erp_size, azimuth, elevation):
    """Continuous ERP pixel coordinates of directions (array-aware)."""
    rows, cols = _check_erp_size(erp_size)
    az = wrap_azimuth(azimuth)
    el = np.clip(np.asarray(elevation, dtype=float), -HALF_PI, HALF_PI)
    col = (az / TWO_PI + 0.5) * cols - 0.5
    row = (0.5 - el / math.pi) * rows - 0.5
    return row, col


def erp_direction_vectors(erp_size) -> np.ndarray:
    """Unit view vectors of every ERP pixel center, shape (rows, cols, 3)."""
    rows, cols = _check_erp_size(erp_size)
    r = np.arange(rows, dtype=float)[:, None]
    c = np.arange(cols, dtype=float)[None, :]
    az, el = erp_to_sphere(erp_size, r, c)
    return direction_to_vec(az, el)


def solid_angle_weights(erp_size) -> np.ndarray:
    """Per-pixel sphere-area weights for an ERP raster, normalized to sum 1.

    Proportional to cos(elevation) of each pixel center; the basis for every
    sphere-uniform statistic in the toolkit.
    """
    rows, cols = _check_erp_size(erp_size)
    _, el = erp_to_sphere(erp_size, np.arange(rows, dtype=float), 0.0)
    w = np.repeat(np.cos(el)[:, None], cols, axis=1)
    return w / w.sum()
