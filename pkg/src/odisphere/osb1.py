"""OSB1 binary parameter format.

Self-contained little-endian layout, documented byte-exactly so files can be
read without this library:

    offset  size  content
    0       4     magic "OSB1"
    4       4     u32 kind: 1 = bias grid, 2 = attention parameters

kind 1 (bias grid):
    8       4     u32 K (channels)
    12      4     u32 gh (grid rows)
    16      4     u32 gw (grid cols)
    20      8K    f64 channel elevations, radians, ascending
    ...           f64 weights, C-order (K, gh, gw)

kind 2 (attention parameters):
    8       4     u32 arch (1..4)
    12      4     u32 N (scale channels)
    16      4     u32 n_layers
    then per layer:
                  u32 c_out, u32 c_in, u32 kh, u32 kw
                  f64 kernel, C-order (c_out, c_in, kh, kw)
                  f64 bias (c_out)

Writing the result of a read reproduces the input byte-for-byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .multiscale import AttentionParams, ConvLayer
from .saliency import BiasGrid

MAGIC = b"OSB1"
KIND_BIAS = 1
KIND_ATTENTION = 2


def _u32(value: int) -> bytes:
    return struct.pack("<I", value)


def _f64(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


class _Reader:
    def __init__(self, path):
        self.path = Path(path)
        self.buf = self.path.read_bytes()
        self.pos = 0

    def u32(self) -> int:
        if self.pos + 4 > len(self.buf):
            raise FormatError(f"{self.path}: truncated OSB1 file")
        (v,) = struct.unpack_from("<I", self.buf, self.pos)
        self.pos += 4
        return v

    def f64(self, count: int) -> np.ndarray:
        n = count * 8
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated OSB1 payload")
        arr = np.frombuffer(self.buf, dtype="<f8", count=count, offset=self.pos)
        self.pos += n
        return arr.astype(float)

    def magic(self) -> None:
        if self.buf[:4] != MAGIC:
            raise FormatError(f"{self.path}: not an OSB1 file")
        self.pos = 4

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(f"{self.path}: {len(self.buf) - self.pos} trailing bytes")


def write_bias(path, bias: BiasGrid) -> None:
    k, (gh, gw) = bias.channels, bias.grid_shape
    parts = [MAGIC, _u32(KIND_BIAS), _u32(k), _u32(gh), _u32(gw)]
    parts.append(_f64(bias.channel_elevations))
    parts.append(_f64(bias.weights))
    Path(path).write_bytes(b"".join(parts))


def read_bias(path) -> BiasGrid:
    r = _Reader(path)
    r.magic()
    if r.u32() != KIND_BIAS:
        raise FormatError(f"{path}: not a bias-grid OSB1 file")
    k, gh, gw = r.u32(), r.u32(), r.u32()
    elev = r.f64(k)
    weights = r.f64(k * gh * gw).reshape(k, gh, gw)
    r.done()
    return BiasGrid(weights=weights, channel_elevations=elev)


def write_attention(path, params: AttentionParams) -> None:
    parts = [
        MAGIC,
        _u32(KIND_ATTENTION),
        _u32(params.arch),
        _u32(params.n_scales),
        _u32(len(params.layers)),
    ]
    for layer in params.layers:
        c_out, c_in, kh, kw = layer.weight.shape
        parts.extend([_u32(c_out), _u32(c_in), _u32(kh), _u32(kw)])
        parts.append(_f64(layer.weight))
        parts.append(_f64(layer.bias))
    Path(path).write_bytes(b"".join(parts))


def read_attention(path) -> AttentionParams:
    r = _Reader(path)
    r.magic()
    if r.u32() != KIND_ATTENTION:
        raise FormatError(f"{path}: not an attention-parameter OSB1 file")
    arch, n_scales, n_layers = r.u32(), r.u32(), r.u32()
    layers = []
    for _ in range(n_layers):
        c_out, c_in, kh, kw = r.u32(), r.u32(), r.u32(), r.u32()
        weight = r.f64(c_out * c_in * kh * kw).reshape(c_out, c_in, kh, kw)
        bias = r.f64(c_out)
        layers.append(ConvLayer(weight=weight, bias=bias))
    r.done()
    return AttentionParams(arch=arch, n_scales=n_scales, layers=layers)


def read_kind(path) -> int:
    """Peek at the payload kind of an OSB1 file."""
    r = _Reader(path)
    r.magic()
    return r.u32()
