"""Pixel operators shared by the solver and the losses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BilateralParams:
    sigma_spatial: float = 3.0
    sigma_range: float = 0.1
    radius: int = 6

    def __post_init__(self):
        if not self.sigma_spatial > 0 or not self.sigma_range > 0:
            raise ValueError("bilateral sigmas must be positive")
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError(f"bilateral radius must be an integer >= 1, got {self.radius}")

    @classmethod
    def for_sigma(cls, sigma_spatial: float, sigma_range: float) -> "BilateralParams":
        """Params with the recommended radius ceil(2 * sigma_spatial)."""
        return cls(sigma_spatial, sigma_range, max(1, math.ceil(2 * sigma_spatial)))


def forward_gradients(m) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along columns (gx) and rows (gy); last column/row is zero."""
    m = np.asarray(m, dtype=np.float64)
    gx = np.zeros_like(m)
    gy = np.zeros_like(m)
    gx[:, :-1] = m[:, 1:] - m[:, :-1]
    gy[:-1, :] = m[1:, :] - m[:-1, :]
    return gx, gy


def shrink(x, eta: float) -> np.ndarray:
    """Soft-thresholding, the proximal operator of eta * |.|."""
    if eta < 0:
        raise ValueError(f"shrink threshold must be nonnegative, got {eta}")
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(np.abs(x) - eta, 0.0) * np.sign(x)


def bilateral_filter(m, p: BilateralParams) -> np.ndarray:
    """Brute-force bilateral filter with clamped borders.

    Each output pixel is the normalized weighted mean over the
    (2r+1) x (2r+1) window, weights being the product of a spatial and a
    range Gaussian. The window offsets are accumulated in a fixed order, so
    the result is deterministic. The update is accumulated on differences to
    the center value, which keeps constant regions bit-exact.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"bilateral_filter expects a 2-D map, got shape {m.shape}")
    r = int(p.radius)
    h, w = m.shape
    padded = np.pad(m, r, mode="edge")
    inv_s = 1.0 / (2.0 * p.sigma_spatial**2)
    inv_r = 1.0 / (2.0 * p.sigma_range**2)
    num = np.zeros_like(m)
    den = np.zeros_like(m)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            q = padded[r + dy : r + dy + h, r + dx : r + dx + w]
            wgt = math.exp(-(dx * dx + dy * dy) * inv_s) * np.exp(-((q - m) ** 2) * inv_r)
            num += wgt * (q - m)
            den += wgt
    return m + num / den
