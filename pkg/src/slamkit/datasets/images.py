"""PNG image I/O helpers (8-bit color, 16-bit depth)."""

from __future__ import annotations

import numpy as np
from PIL import Image

from slamkit.errors import DatasetError


def write_color_png(path, img) -> None:
    """img: (H, W, 3) float in [0, 1]."""
    arr = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_color(path) -> np.ndarray:
    """Decode to (H, W, 3) float in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, SyntaxError) as e:
        raise DatasetError(f"cannot read color image {path}: {e}") from e
    return arr / 255.0


def write_depth_png(path, depth_m, depth_scale) -> None:
    """Store metric depth as 16-bit PNG; 0 stays 0 (invalid)."""
    stored = np.floor(np.asarray(depth_m) * depth_scale + 0.5)
    arr = np.clip(stored, 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path, format="PNG")


def read_depth_raw(path) -> np.ndarray:
    """Stored integer depth values as float64 (not yet scaled to meters)."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im, dtype=np.float64)
    except (OSError, SyntaxError) as e:
        raise DatasetError(f"cannot read depth image {path}: {e}") from e
    if arr.ndim != 2:
        raise DatasetError(f"depth image {path} is not single-channel")
    return arr
