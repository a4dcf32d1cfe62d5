"""Portable float map (PFM) reader/writer.

Little-endian, scale header -1.0. Single-channel maps use the ``Pf`` magic,
3-channel rasters ``PF``. Rows are stored bottom-to-top as the format
requires; arrays in memory are top-down like every other raster here.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError


def read_pfm(path) -> np.ndarray:
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.readline().strip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise FormatError(f"{path}: not a PFM file (magic {magic!r})")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"{path}: malformed PFM dimension line")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        little_endian = scale < 0
        count = width * height * channels
        buf = fh.read(count * 4)
        if len(buf) != count * 4:
            raise FormatError(f"{path}: truncated PFM payload")
        dtype = "<f4" if little_endian else ">f4"
        data = np.frombuffer(buf, dtype=dtype).astype(np.float32)
    if channels == 1:
        img = data.reshape(height, width)
    else:
        img = data.reshape(height, width, 3)
    return np.flipud(img).copy()


def write_pfm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        magic = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"PF"
    else:
        raise FormatError(f"PFM supports (H, W) or (H, W, 3) arrays, got shape {img.shape}")
    height, width = img.shape[0], img.shape[1]
    payload = np.flipud(img).astype("<f4").tobytes()
    with Path(path).open("wb") as fh:
        fh.write(magic + b"\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(payload)
