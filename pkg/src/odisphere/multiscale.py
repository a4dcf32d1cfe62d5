"""Multi-angle-of-view alignment and pixel-wise attention integration.

Maps predicted at several angles of view for one viewing direction are
cropped and rescaled onto the frame of the smallest angle, then combined as
a per-pixel convex combination whose weights come from a small convolutional
attention stack ending in a channel softmax.

Four architectures are supported:

====  =============  =====================================================
arch  input          attention stack
====  =============  =====================================================
1     stacked maps   3x3 conv (C) - ReLU - 2x2 conv (N) - softmax
2     stacked maps   1x1 (C) - ReLU - 3x3 (C) - ReLU - 1x1 (4C) - ReLU -
                     1x1 (N) - softmax
3     feature maps   as arch 1
4     feature maps   as arch 2
====  =============  =====================================================

Feature-map inputs come from the backend output for the smallest angle of
view. All convolutions preserve spatial size (zero padding; the even 2x2
kernel pads one row/column at the bottom/right).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .interp import affine_resample, resize_bilinear

FEATURE_ARCHS = (3, 4)
DEEP_ARCHS = (2, 4)
DEFAULT_HIDDEN_CHANNELS = 8


@dataclass
class ScaleStack:
    """Aligned per-scale maps for one viewing direction.

    ``maps`` is (N, H, W); ``aovs`` the matching angles of view in strictly
    increasing order. Index 0 (the smallest angle) is the alignment frame.
    """

    maps: np.ndarray
    aovs: tuple[float, ...]

    def __post_init__(self):
        self.maps = np.asarray(self.maps, dtype=float)
        self.aovs = tuple(float(a) for a in self.aovs)
        if self.maps.ndim != 3 or self.maps.shape[0] != len(self.aovs):
            raise ConfigError(
                f"expected (N, H, W) maps for {len(self.aovs)} angles, got {self.maps.shape}"
            )
        if any(b <= a for a, b in zip(self.aovs, self.aovs[1:])):
            raise ConfigError(f"angles of view must be strictly increasing, got {self.aovs}")

    @property
    def n_scales(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1], self.maps.shape[2]


def crop_resize_to_smallest(maps, aovs, aovs_y=None) -> ScaleStack:
    """Align maps from several angles of view onto the smallest one's frame.

    For a map at angle a, the centered sub-rectangle of half-width
    ``focal_length(a, W) * tan(a_min / 2)`` per axis is cropped and
    bilinearly resized back to W x H. The smallest-angle map passes through
    unchanged. Patches at the same direction are uniform rescalings of one
    another on the shared tangent plane, so the mapping reduces to scaling
    pixel offsets by the focal-length ratio.
    """
    maps = [np.asarray(m, dtype=float) for m in maps]
    aovs = [float(a) for a in aovs]
    if len(maps) != len(aovs) or not maps:
        raise ConfigError("one angle of view per map is required")
    shape = maps[0].shape
    if any(m.shape != shape for m in maps) or len(shape) != 2:
        raise ConfigError("all maps must share one (H, W) shape")
    if any(b <= a for a, b in zip(aovs, aovs[1:])):
        raise ConfigError(f"angles of view must be strictly increasing, got {aovs}")
    aovs_y = aovs if aovs_y is None else [float(a) for a in aovs_y]

    h, w = shape
    out = np.empty((len(maps), h, w), dtype=float)
    for i, (m, ax, ay) in enumerate(zip(maps, aovs, aovs_y)):
        ratio_x = math.tan(aovs[0] / 2.0) / math.tan(ax / 2.0)
        ratio_y = math.tan(aovs_y[0] / 2.0) / math.tan(ay / 2.0)
        if ratio_x > 1.0 + 1e-12 or ratio_y > 1.0 + 1e-12:
            raise ConfigError("crop exceeds map bounds: angle smaller than the reference")
        if ratio_x == 1.0 and ratio_y == 1.0:
            out[i] = m
            continue
        # Source coordinate of output pixel k along an axis of length n:
        # (n-1)/2 + (k - (n-1)/2) * ratio.
        off_y = (h - 1) / 2.0 * (1.0 - ratio_y)
        off_x = (w - 1) / 2.0 * (1.0 - ratio_x)
        out[i] = affine_resample(m, (h, w), (ratio_y, ratio_x), (off_y, off_x))
    return ScaleStack(maps=out, aovs=tuple(aovs))


@dataclass
class ConvLayer:
    """One zero-padded convolution: weight (c_out, c_in, kh, kw) and bias."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weight.ndim != 4 or self.bias.shape != (self.weight.shape[0],):
            raise ConfigError(
                f"bad conv shapes: weight {self.weight.shape}, bias {self.bias.shape}"
            )


def _pad_for(k: int) -> tuple[int, int]:
    # Odd kernels pad symmetrically; even ones pad the extra row/col after.
    before = (k - 1) // 2
    return before, k - 1 - before


def conv2d(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Same-size 2D convolution over channel-first maps (c_in, H, W)."""
    c_out, c_in, kh, kw = layer.weight.shape
    if x.ndim != 3 or x.shape[0] != c_in:
        raise ConfigError(f"expected ({c_in}, H, W) input, got {x.shape}")
    h, w = x.shape[1], x.shape[2]
    pt, pb = _pad_for(kh)
    pl, pr = _pad_for(kw)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr)))
    out = np.tile(layer.bias[:, None, None], (1, h, w))
    for di in range(kh):
        for dj in range(kw):
            out += np.einsum("oc,chw->ohw", layer.weight[:, :, di, dj], xp[:, di : di + h, dj : dj + w])
    return out


def conv2d_backward(x: np.ndarray, layer: ConvLayer, grad_out: np.ndarray):
    """Gradients of :func:`conv2d` w.r.t. input, weight, and bias."""
    c_out, c_in, kh, kw = layer.weight.shape
    h, w = x.shape[1], x.shape[2]
    pt, pb = _pad_for(kh)
    pl, pr = _pad_for(kw)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr)))
    grad_w = np.zeros_like(layer.weight)
    grad_xp = np.zeros_like(xp)
    for di in range(kh):
        for dj in range(kw):
            window = xp[:, di : di + h, dj : dj + w]
            grad_w[:, :, di, dj] = np.einsum("ohw,chw->oc", grad_out, window)
            grad_xp[:, di : di + h, dj : dj + w] += np.einsum(
                "oc,ohw->chw", layer.weight[:, :, di, dj], grad_out
            )
    grad_b = grad_out.sum(axis=(1, 2))
    grad_x = grad_xp[:, pt : pt + h, pl : pl + w]
    return grad_x, grad_w, grad_b


def softmax_channels(x: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the channel axis of (C, H, W)."""
    z = x - x.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def softmax_channels_backward(weights: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    inner = (grad_out * weights).sum(axis=0, keepdims=True)
    return weights * (grad_out - inner)


@dataclass
class AttentionParams:
    """Convolution parameters of one integration architecture."""

    arch: int
    n_scales: int
    layers: list[ConvLayer] = field(default_factory=list)

    def __post_init__(self):
        if self.arch not in (1, 2, 3, 4):
            raise ConfigError(f"arch must be 1..4, got {self.arch}")
        if not self.layers:
            raise ConfigError("at least one conv layer is required")
        if self.layers[-1].weight.shape[0] != self.n_scales:
            raise ConfigError("final layer must emit one channel per scale")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.weight.shape[1] != a.weight.shape[0]:
                raise ConfigError("conv layer channel counts do not chain")

    @property
    def in_channels(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def uses_features(self) -> bool:
        return self.arch in FEATURE_ARCHS

    def copy(self) -> "AttentionParams":
        return AttentionParams(
            arch=self.arch,
            n_scales=self.n_scales,
            layers=[ConvLayer(l.weight.copy(), l.bias.copy()) for l in self.layers],
        )


def _layer_specs(arch: int, n_scales: int, in_channels: int, hidden: int):
    if arch in (1, 3):
        return [(hidden, in_channels, 3, 3), (n_scales, hidden, 2, 2)]
    return [
        (hidden, in_channels, 1, 1),
        (hidden, hidden, 3, 3),
        (4 * hidden, hidden, 1, 1),
        (n_scales, 4 * hidden, 1, 1),
    ]


def init_attention_params(
    arch: int,
    n_scales: int,
    in_channels: int,
    hidden: int = DEFAULT_HIDDEN_CHANNELS,
    seed: int = 0,
) -> AttentionParams:
    """Seeded uniform initialization in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if arch in FEATURE_ARCHS and in_channels < 1:
        raise ConfigError("feature-input architectures need at least one feature channel")
    rng = np.random.default_rng(seed)
    layers = []
    for c_out, c_in, kh, kw in _layer_specs(arch, n_scales, in_channels, hidden):
        bound = 1.0 / math.sqrt(c_in * kh * kw)
        weight = rng.uniform(-bound, bound, size=(c_out, c_in, kh, kw))
        bias = rng.uniform(-bound, bound, size=c_out)
        layers.append(ConvLayer(weight=weight, bias=bias))
    return AttentionParams(arch=arch, n_scales=n_scales, layers=layers)


def _attention_input(stack: ScaleStack, params: AttentionParams, features):
    if not params.uses_features:
        return stack.maps
    if features is None:
        raise ConfigError(f"arch {params.arch} requires the smallest-angle feature maps")
    features = np.asarray(features, dtype=float)
    if features.ndim != 3:
        raise ConfigError(f"features must be (M, H, W), got {features.shape}")
    h, w = stack.shape
    if features.shape[1:] != (h, w):
        features = np.stack([resize_bilinear(fm, (h, w)) for fm in features])
    return features


def attention_forward_cached(stack: ScaleStack, params: AttentionParams, features=None):
    """Forward pass returning the weights plus the per-layer activations
    needed by the backward pass."""
    x = _attention_input(stack, params, features)
    if params.in_channels != x.shape[0]:
        raise ConfigError(
            f"attention expects {params.in_channels} input channels, got {x.shape[0]}"
        )
    cache = []
    for i, layer in enumerate(params.layers):
        pre = conv2d(x, layer)
        last = i == len(params.layers) - 1
        post = pre if last else np.maximum(pre, 0.0)
        cache.append((x, pre))
        x = post
    weights = softmax_channels(x)
    return weights, cache


def attention_backward(params: AttentionParams, cache, weights, grad_weights):
    """Gradients for every conv layer given d(loss)/d(weights)."""
    grad = softmax_channels_backward(weights, grad_weights)
    grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        x, pre = cache[i]
        if i != len(params.layers) - 1:
            grad = grad * (pre > 0.0)
        grad, gw, gb = conv2d_backward(x, params.layers[i], grad)
        grads[i] = (gw, gb)
    return grads


def attention_forward(stack: ScaleStack, params: AttentionParams, features=None) -> np.ndarray:
    """Per-pixel softmax weights over the N scales, shape (N, H, W)."""
    weights, _ = attention_forward_cached(stack, params, features)
    return weights


def integrate(stack: ScaleStack, weights: np.ndarray) -> np.ndarray:
    """Pixel-wise convex combination of the aligned scale maps."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != stack.maps.shape:
        raise ConfigError(
            f"weights shape {weights.shape} does not match stack {stack.maps.shape}"
        )
    return (weights * stack.maps).sum(axis=0)
