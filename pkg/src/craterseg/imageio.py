"""Small PNG helpers shared by the dataset generator and the CLI."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def save_gray_png(path: str | Path, arr: np.ndarray) -> None:
    """Write a 2D uint8 array as an 8-bit grayscale PNG."""
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 array, got {arr.dtype}")
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_gray_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale PNG into a 2D uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_rgb_png(path: str | Path, arr: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as an RGB PNG."""
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) uint8 array, got {arr.shape} {arr.dtype}")
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_rgb_png(path: str | Path) -> np.ndarray:
    """Read an RGB PNG into an (H, W, 3) uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)
