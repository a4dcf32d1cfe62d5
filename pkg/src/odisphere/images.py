"""Raster loading helpers: PFM for float maps, 8-bit PNG/JPEG for images."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError
from .pfm import read_pfm


def load_image(path) -> np.ndarray:
    """Load an input image as float64 in [0, 1] (PNG/JPEG) or raw floats (PFM)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        return np.asarray(read_pfm(path), dtype=float)
    if suffix in (".png", ".jpg", ".jpeg"):
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=float) / 255.0
        return arr
    raise FormatError(f"unsupported image format: {path}")


def load_map(path) -> np.ndarray:
    """Load a single-channel float map; color inputs are averaged."""
    arr = load_image(path)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    return arr


def save_png(path, arr: np.ndarray) -> None:
    """Write a max-normalized 8-bit grayscale visualization of a float map."""
    arr = np.asarray(arr, dtype=float)
    top = float(arr.max())
    scaled = np.zeros_like(arr) if top <= 0 else np.clip(arr / top, 0.0, 1.0)
    Image.fromarray((scaled * 255.0 + 0.5).astype(np.uint8), mode="L").save(path)
