"""Pluggable 2D saliency backends, elevation-conditioned bias grids, and the
single post-fusion L1 normalization.

Backends return raw, non-negative, *unnormalized* maps. Normalizing per patch
would erase the relative weight of viewing directions, so normalization
happens exactly once, after the per-patch maps have been fused into ERP.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, DegenerateInputError, FormatError
from .interp import resize_bilinear
from .pfm import read_pfm

# Bias weights are clamped to this floor after every training update so the
# multiplicative-prior interpretation survives optimization.
BIAS_FLOOR = 1e-6

DEFAULT_BIAS_ELEVATIONS_DEG = (-90.0, -45.0, 0.0, 45.0, 90.0)
DEFAULT_BIAS_SHAPE = (20, 20)
DEFAULT_SIGMA_PAIRS = ((1.0, 4.0), (2.0, 8.0), (4.0, 16.0))


@dataclass
class BackendOutput:
    """Raw saliency plus optional feature maps, both at patch resolution."""

    saliency: np.ndarray  # (H, W), >= 0, unnormalized
    features: np.ndarray | None = None  # (M, H', W')


class SaliencyBackend(ABC):
    """Maps an image patch to a raw single-channel saliency patch.

    Implementations must be safe for concurrent read-only prediction calls.
    """

    @abstractmethod
    def predict(self, image: np.ndarray, patch_id: str | None = None) -> BackendOutput:
        ...


def _as_channels(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.size == 0:
        raise ConfigError("empty patch")
    if image.ndim == 2:
        return image[None]
    if image.ndim == 3 and image.shape[2] in (1, 3):
        return np.moveaxis(image, 2, 0)
    raise ConfigError(f"expected (H, W) or (H, W, 1|3) patch, got shape {image.shape}")


class ContrastBackend(SaliencyBackend):
    """Default self-contained backend: multi-scale center-surround contrast.

    Per channel and per (center, surround) sigma pair, responds with
    |G(sigma_c) - G(sigma_s)|; the raw map sums the responses over channels
    and scale pairs. Feature maps expose the per-scale responses plus the
    center-blurred intensity at each scale, which gives attention modules a
    direct handle on object scale.
    """

    def __init__(self, sigma_pairs=DEFAULT_SIGMA_PAIRS):
        self.sigma_pairs = tuple((float(a), float(b)) for a, b in sigma_pairs)
        if not self.sigma_pairs:
            raise ConfigError("at least one sigma pair is required")

    @property
    def feature_channels(self) -> int:
        return 2 * len(self.sigma_pairs)

    def predict(self, image: np.ndarray, patch_id: str | None = None) -> BackendOutput:
        chans = _as_channels(image)
        h, w = chans.shape[1], chans.shape[2]
        intensity = chans.mean(axis=0)
        saliency = np.zeros((h, w), dtype=float)
        features = np.zeros((self.feature_channels, h, w), dtype=float)
        for i, (sc, ss) in enumerate(self.sigma_pairs):
            band = np.zeros((h, w), dtype=float)
            for ch in chans:
                band += np.abs(gaussian_filter(ch, sc) - gaussian_filter(ch, ss))
            saliency += band
            features[i] = band
            features[len(self.sigma_pairs) + i] = gaussian_filter(intensity, sc)
        return BackendOutput(saliency=saliency, features=features)


class FileBackend(SaliencyBackend):
    """Serves precomputed raw maps from disk, keyed by patch id.

    Lets any external 2D saliency model plug into the pipeline: run it
    offline on the extracted patches and point this backend at the results.
    """

    def __init__(self, directory, pattern: str = "{patch_id}.pfm"):
        self.directory = Path(directory)
        self.pattern = pattern

    def predict(self, image: np.ndarray, patch_id: str | None = None) -> BackendOutput:
        if patch_id is None:
            raise ConfigError("FileBackend requires a patch id")
        path = self.directory / self.pattern.format(patch_id=patch_id)
        if not path.exists():
            raise FormatError(f"no stored saliency map for patch {patch_id!r}: {path}")
        data = np.asarray(read_pfm(path), dtype=float)
        if data.ndim != 2:
            raise FormatError(f"{path}: stored saliency must be single-channel")
        expected = np.asarray(image).shape[:2]
        if data.shape != tuple(expected):
            raise FormatError(
                f"{path}: stored map shape {data.shape} does not match patch shape {tuple(expected)}"
            )
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise FormatError(f"{path}: saliency values must be finite and non-negative")
        return BackendOutput(saliency=data)


@dataclass
class BiasGrid:
    """Low-resolution multiplicative prior, one channel per elevation angle.

    ``weights`` has shape (K, gh, gw); ``channel_elevations`` holds the K
    elevations in radians. K=1 models a center bias, K=5 the equator bias
    conditioned on the extraction elevation.
    """

    weights: np.ndarray
    channel_elevations: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.channel_elevations = np.asarray(self.channel_elevations, dtype=float)
        if self.weights.ndim != 3:
            raise ConfigError(f"bias weights must be (K, gh, gw), got {self.weights.shape}")
        if self.channel_elevations.shape != (self.weights.shape[0],):
            raise ConfigError("one elevation per bias channel is required")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ConfigError("bias weights must be finite and non-negative")

    @classmethod
    def uniform(cls, shape=DEFAULT_BIAS_SHAPE, elevations_deg=DEFAULT_BIAS_ELEVATIONS_DEG):
        """All-ones grid (identity prior before training)."""
        elev = np.radians(np.asarray(elevations_deg, dtype=float))
        return cls(np.ones((len(elev), shape[0], shape[1])), elev)

    @classmethod
    def uniform_center(cls, shape=DEFAULT_BIAS_SHAPE):
        """Single-channel variant used for the center-bias case."""
        return cls.uniform(shape=shape, elevations_deg=(0.0,))

    @property
    def channels(self) -> int:
        return self.weights.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.weights.shape[1], self.weights.shape[2]

    def copy(self) -> "BiasGrid":
        return BiasGrid(self.weights.copy(), self.channel_elevations.copy())

    def clamp(self) -> None:
        np.maximum(self.weights, BIAS_FLOOR, out=self.weights)


def select_bias_channel(bias: BiasGrid, elevation: float) -> int:
    """Index of the channel nearest in elevation; ties break toward the equator."""
    diffs = np.abs(bias.channel_elevations - float(elevation))
    best = diffs.min()
    candidates = np.flatnonzero(diffs <= best + 1e-12)
    return int(candidates[np.argmin(np.abs(bias.channel_elevations[candidates]))])


def upsample_bias_channel(bias: BiasGrid, channel: int, out_shape) -> np.ndarray:
    """Bias channel bilinearly upsampled to patch resolution (rows, cols)."""
    return resize_bilinear(bias.weights[channel], out_shape)


def apply_bias(raw: np.ndarray, bias: BiasGrid, elevation: float) -> np.ndarray:
    """Multiply a raw patch map by the elevation-matched bias channel."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ConfigError(f"apply_bias expects a single-channel (H, W) map, got {raw.shape}")
    if np.any(raw < 0):
        raise ConfigError("raw saliency must be non-negative")
    k = select_bias_channel(bias, elevation)
    if bias.grid_shape == raw.shape:
        up = bias.weights[k]
    else:
        up = upsample_bias_channel(bias, k, raw.shape)
    return raw * up


def l1_normalize(grid: np.ndarray, sphere_weights: np.ndarray | None = None) -> np.ndarray:
    """Divide by the pixel-wise sum so the map sums to 1.

    With ``sphere_weights`` (solid-angle weights) the weighted sum is
    normalized instead; the plain pixel sum is the default.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0):
        raise DegenerateInputError("l1_normalize expects a non-negative map")
    total = float(grid.sum()) if sphere_weights is None else float((grid * sphere_weights).sum())
    if not math.isfinite(total) or total <= 0.0:
        raise DegenerateInputError("cannot normalize a map with non-positive sum")
    return grid / total
