"""PNG image I/O and JSON sidecars for RAW tensors."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from llraw.errors import DimensionError


def read_png(path) -> np.ndarray:
    """Load an RGB PNG as a (3, H, W) float64 array in [0, 1]."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def write_png(path, pixels: np.ndarray) -> None:
    """Save a (3, H, W) [0, 1] array as an 8-bit RGB PNG."""
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise DimensionError(f"write_png: expected (3, H, W), got {pixels.shape}")
    u8 = np.clip(np.round(pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def write_gray_png(path, plane: np.ndarray) -> None:
    """Save a (H, W) [0, 1] array as an 8-bit grayscale PNG."""
    if plane.ndim != 2:
        raise DimensionError(f"write_gray_png: expected (H, W), got {plane.shape}")
    u8 = np.clip(np.round(plane * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path, format="PNG")


def write_sidecar(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_sidecar(path) -> dict:
    return json.loads(Path(path).read_text())
