"""Lossless image IO and grid assembly (channel-major uint8 arrays)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


def float_to_uint8(img: np.ndarray) -> np.ndarray:
    """(3, H, W) floats in [-1, 1] -> uint8, round-half-away like PIL."""
    scaled = (np.clip(img, -1.0, 1.0) + 1.0) * 127.5
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def uint8_to_float(img: np.ndarray) -> np.ndarray:
    """(3, H, W) uint8 -> float32 in [-1, 1]."""
    return (img.astype(np.float32) / 127.5) - 1.0


def save_png(path: str | Path, img: np.ndarray) -> None:
    """Write a (3, H, W) uint8 array as a lossless PNG."""
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[0] != 3:
        raise DataError(f"expected (3, H, W) uint8 image, got {img.dtype} {img.shape}")
    Image.fromarray(np.transpose(img, (1, 2, 0))).save(Path(path), format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    """Read a PNG into a (3, H, W) uint8 array."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"image not found: {path}")
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return np.transpose(arr, (2, 0, 1))


def image_grid(
    images: np.ndarray, rows: int, cols: int, border: int = 2, border_value: int = 0
) -> np.ndarray:
    """Tile (N, 3, H, W) uint8 images row-major into one bordered grid image."""
    n, c, h, w = images.shape
    if n != rows * cols:
        raise DataError(f"grid of {rows}x{cols} needs {rows * cols} images, got {n}")
    grid_h = rows * h + (rows + 1) * border
    grid_w = cols * w + (cols + 1) * border
    grid = np.full((c, grid_h, grid_w), border_value, dtype=np.uint8)
    for idx in range(n):
        r, col = divmod(idx, cols)
        y = border + r * (h + border)
        x = border + col * (w + border)
        grid[:, y : y + h, x : x + w] = images[idx]
    return grid
