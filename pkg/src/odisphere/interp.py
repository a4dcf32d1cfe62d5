"""Bilinear sampling and separable resampling primitives.

Everything here is hand-rolled on purpose: the same index/weight scheme is
reused by the forward resampling paths and by their adjoints, which the
training code needs for exact gradients.
"""

from __future__ import annotations

import numpy as np


def bilinear_wrap_sample(img: np.ndarray, row, col) -> np.ndarray:
    """Sample a 2D (or 2D multi-channel) raster at continuous coordinates.

    Columns wrap around (azimuth seam); rows clamp at the poles. ``img`` is
    (H, W) or (H, W, C); ``row``/``col`` broadcast together.
    """
    img = np.asarray(img)
    rows, cols = img.shape[0], img.shape[1]
    row = np.asarray(row, dtype=float)
    col = np.asarray(col, dtype=float)

    r0f = np.floor(row)
    c0f = np.floor(col)
    tr = row - r0f
    tc = col - c0f
    r0 = np.clip(r0f.astype(np.int64), 0, rows - 1)
    r1 = np.clip(r0f.astype(np.int64) + 1, 0, rows - 1)
    c0 = np.mod(c0f.astype(np.int64), cols)
    c1 = np.mod(c0f.astype(np.int64) + 1, cols)

    if img.ndim == 3:
        tr = tr[..., None]
        tc = tc[..., None]
    v00 = img[r0, c0]
    v01 = img[r0, c1]
    v10 = img[r1, c0]
    v11 = img[r1, c1]
    top = v00 * (1.0 - tc) + v01 * tc
    bot = v10 * (1.0 - tc) + v11 * tc
    return top * (1.0 - tr) + bot * tr


def nearest_wrap_sample(img: np.ndarray, row, col) -> np.ndarray:
    """Nearest-pixel lookup with column wrap and row clamp."""
    img = np.asarray(img)
    rows, cols = img.shape[0], img.shape[1]
    r = np.clip(np.rint(np.asarray(row, dtype=float)).astype(np.int64), 0, rows - 1)
    c = np.mod(np.rint(np.asarray(col, dtype=float)).astype(np.int64), cols)
    return img[r, c]


def _axis_taps(n_out: int, n_in: int, scale: float, offset: float):
    """Per-output-pixel source taps for one axis: (i0, i1, t) with edge clamp.

    Source coordinate of output pixel k is ``offset + scale * k``.
    """
    src = offset + scale * np.arange(n_out, dtype=float)
    i0f = np.floor(src)
    t = src - i0f
    i0 = np.clip(i0f.astype(np.int64), 0, n_in - 1)
    i1 = np.clip(i0f.astype(np.int64) + 1, 0, n_in - 1)
    return i0, i1, t


def affine_resample(img: np.ndarray, out_shape, scales, offsets) -> np.ndarray:
    """Bilinearly resample ``img`` (H, W) through an axis-aligned affine map.

    Output pixel (r, c) reads source coordinate
    (offsets[0] + scales[0]*r, offsets[1] + scales[1]*c), edge-clamped.
    """
    img = np.asarray(img, dtype=float)
    h_out, w_out = out_shape
    r0, r1, tr = _axis_taps(h_out, img.shape[0], scales[0], offsets[0])
    c0, c1, tc = _axis_taps(w_out, img.shape[1], scales[1], offsets[1])
    tr = tr[:, None]
    tc = tc[None, :]
    top = img[np.ix_(r0, c0)] * (1.0 - tc) + img[np.ix_(r0, c1)] * tc
    bot = img[np.ix_(r1, c0)] * (1.0 - tc) + img[np.ix_(r1, c1)] * tc
    return top * (1.0 - tr) + bot * tr


def affine_resample_adjoint(grad_out: np.ndarray, in_shape, scales, offsets) -> np.ndarray:
    """Adjoint of :func:`affine_resample`: scatter-add the bilinear weights."""
    grad_out = np.asarray(grad_out, dtype=float)
    h_out, w_out = grad_out.shape
    r0, r1, tr = _axis_taps(h_out, in_shape[0], scales[0], offsets[0])
    c0, c1, tc = _axis_taps(w_out, in_shape[1], scales[1], offsets[1])
    tr = tr[:, None]
    tc = tc[None, :]
    grad_in = np.zeros(in_shape, dtype=float)
    rr0 = np.broadcast_to(r0[:, None], grad_out.shape)
    rr1 = np.broadcast_to(r1[:, None], grad_out.shape)
    cc0 = np.broadcast_to(c0[None, :], grad_out.shape)
    cc1 = np.broadcast_to(c1[None, :], grad_out.shape)
    np.add.at(grad_in, (rr0, cc0), grad_out * (1.0 - tr) * (1.0 - tc))
    np.add.at(grad_in, (rr0, cc1), grad_out * (1.0 - tr) * tc)
    np.add.at(grad_in, (rr1, cc0), grad_out * tr * (1.0 - tc))
    np.add.at(grad_in, (rr1, cc1), grad_out * tr * tc)
    return grad_in


def _resize_params(n_in: int, n_out: int) -> tuple[float, float]:
    # Half-pixel convention: src = (dst + 0.5) * n_in/n_out - 0.5.
    scale = n_in / n_out
    return scale, 0.5 * scale - 0.5


def resize_bilinear(img: np.ndarray, out_shape) -> np.ndarray:
    """Resize a 2D raster with the half-pixel-center convention."""
    img = np.asarray(img, dtype=float)
    sr = _resize_params(img.shape[0], out_shape[0])
    sc = _resize_params(img.shape[1], out_shape[1])
    return affine_resample(img, out_shape, (sr[0], sc[0]), (sr[1], sc[1]))


def resize_bilinear_adjoint(grad_out: np.ndarray, in_shape) -> np.ndarray:
    """Adjoint of :func:`resize_bilinear` for the given input shape."""
    grad_out = np.asarray(grad_out, dtype=float)
    sr = _resize_params(in_shape[0], grad_out.shape[0])
    sc = _resize_params(in_shape[1], grad_out.shape[1])
    return affine_resample_adjoint(grad_out, in_shape, (sr[0], sc[0]), (sr[1], sc[1]))
