"""Image containers, PNG I/O and decomposition initialization.

Images are float64 arrays of shape (H, W, C) with C in {1, 3} and values in
[0, 1]. Single-channel fields (illumination, luminance) are (H, W) arrays and
are called maps throughout the package.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

# Illumination floor; keeps R = I / L bounded on black pixels.
DELTA_L = 1e-4


class ImageFormatError(ValueError):
    """Raised for PNG files that are not 8-bit grayscale or RGB."""


@dataclass
class StageRecord:
    L: np.ndarray
    R: np.ndarray
    N: np.ndarray
    residual_norm: float


@dataclass
class Decomposition:
    """Illumination map, reflectance and signed noise residual of an image."""

    L: np.ndarray
    R: np.ndarray
    N: np.ndarray
    stage_history: list[StageRecord] = field(default_factory=list)

    def reconstruct(self) -> np.ndarray:
        return self.R * self.L[..., None] + self.N


def as_image(data) -> np.ndarray:
    """Validate and convert array-like data to an (H, W, C) float64 image."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W), (H, W, 1) or (H, W, 3) data, got shape {img.shape}")
    if not np.all(np.isfinite(img)) or img.min(initial=0.0) < 0.0 or img.max(initial=0.0) > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return img


def as_map(data) -> np.ndarray:
    m = np.asarray(data, dtype=np.float64)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[..., 0]
    if m.ndim != 2:
        raise ValueError(f"expected a single-channel (H, W) map, got shape {m.shape}")
    return m


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG; byte u becomes u / 255."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with PILImage.open(path) as im:
        if im.format != "PNG":
            raise ImageFormatError(f"{path}: not a PNG file ({im.format})")
        if im.mode not in ("L", "RGB"):
            raise ImageFormatError(f"{path}: unsupported PNG mode {im.mode!r}; need 8-bit gray or RGB")
        arr = np.asarray(im, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr.astype(np.float64) / 255.0


def quantize(img: np.ndarray) -> np.ndarray:
    """8-bit quantization with round-half-up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(img, path: str | os.PathLike) -> None:
    img = as_image(img)
    q = quantize(img)
    if q.shape[2] == 1:
        pil = PILImage.fromarray(q[..., 0], mode="L")
    else:
        pil = PILImage.fromarray(q, mode="RGB")
    pil.save(path, format="PNG")


def extract_illumination(img) -> np.ndarray:
    """Per-pixel maximum over channels."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img.copy()
    return img.max(axis=2)


def gamma_transform(img, gamma: float) -> np.ndarray:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return np.power(np.asarray(img, dtype=np.float64), gamma)


def init_decomposition(img) -> Decomposition:
    """Max-channel illumination, R = I / L clamped to [0, 1], N = 0."""
    img = as_image(img)
    L = np.maximum(extract_illumination(img), DELTA_L)
    R = np.clip(img / L[..., None], 0.0, 1.0)
    return Decomposition(L=L, R=R, N=np.zeros_like(img))
