"""PSNR / SSIM and the decomposition and enhancement losses.

All L1 terms are means, so the loss weights do not depend on resolution.
Gradient terms use the forward differences of ``ops.forward_gradients`` and
average the horizontal and vertical directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate2d

from .imgcore import extract_illumination
from .ops import forward_gradients


@dataclass(frozen=True)
class LossWeights:
    w_rs: float = 0.009
    w_mc: float = 0.15
    w_is: float = 0.2
    smooth_eps: float = 0.01
    mutual_c: float = 10.0

    def __post_init__(self):
        if min(self.w_rs, self.w_mc, self.w_is, self.smooth_eps, self.mutual_c) < 0:
            raise ValueError("loss weights must be nonnegative")


def _same(*arrays):
    arrs = [np.asarray(a, dtype=np.float64) for a in arrays]
    shape = arrs[0].shape
    for a in arrs[1:]:
        if a.shape != shape:
            raise ValueError(f"shape mismatch: {shape} vs {a.shape}")
    return arrs


def _as_hwc(a):
    return a[..., None] if a.ndim == 2 else a


def psnr(a, b) -> float:
    """PSNR in dB at peak 1.0; identical inputs give +inf."""
    a, b = _same(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, win_size: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all fully contained Gaussian windows, averaged over channels."""
    a, b = _same(a, b)
    a, b = _as_hwc(a), _as_hwc(b)
    if min(a.shape[:2]) < win_size:
        raise ValueError(f"SSIM needs images at least {win_size}x{win_size}, got {a.shape[:2]}")
    w = gaussian_window(win_size, sigma)
    c1, c2 = k1**2, k2**2
    vals = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mx = correlate2d(x, w, mode="valid")
        my = correlate2d(y, w, mode="valid")
        sxx = correlate2d(x * x, w, mode="valid") - mx * mx
        syy = correlate2d(y * y, w, mode="valid") - my * my
        sxy = correlate2d(x * y, w, mode="valid") - mx * my
        smap = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
        vals.append(smap.mean())
    return float(np.mean(vals))


def loss_rs(R_l, R_n) -> float:
    R_l, R_n = _same(R_l, R_n)
    return float(np.mean(np.abs(R_l - R_n)))


def _smoothness(L, I, eps):
    lum = extract_illumination(_as_hwc(I))
    lx, ly = forward_gradients(L)
    ix, iy = forward_gradients(lum)
    tx = np.mean(np.abs(lx) / np.maximum(np.abs(ix), eps))
    ty = np.mean(np.abs(ly) / np.maximum(np.abs(iy), eps))
    return 0.5 * (tx + ty)


def loss_is(L_l, L_n, I_l, I_n, eps: float = 0.01) -> float:
    """Structure-aware illumination smoothness for the low/normal pair."""
    L_l, L_n = _same(L_l, L_n)
    I_l, I_n = _same(I_l, I_n)
    if _as_hwc(I_l).shape[:2] != L_l.shape:
        raise ValueError("illumination and image sizes differ")
    return float(_smoothness(L_l, I_l, eps) + _smoothness(L_n, I_n, eps))


def loss_mc(L_l, L_n, c: float = 10.0) -> float:
    """Mutual consistency: mean of M * exp(-c M) with M = |grad L_l| + |grad L_n|."""
    L_l, L_n = _same(L_l, L_n)
    ax, ay = forward_gradients(L_l)
    bx, by = forward_gradients(L_n)
    mx = np.abs(ax) + np.abs(bx)
    my = np.abs(ay) + np.abs(by)
    return float(0.5 * (np.mean(mx * np.exp(-c * mx)) + np.mean(my * np.exp(-c * my))))


def loss_re(I_l, R_l, L_l, N_l, I_n, R_n, L_n) -> float:
    """Reconstruction error of both branches (the normal branch has no noise)."""
    I_l, R_l, N_l = _same(I_l, R_l, N_l)
    I_n, R_n = _same(I_n, R_n)
    L_l, L_n = np.asarray(L_l, dtype=np.float64), np.asarray(L_n, dtype=np.float64)
    low = _as_hwc(I_l) - _as_hwc(R_l) * L_l[..., None] - _as_hwc(N_l)
    high = _as_hwc(I_n) - _as_hwc(R_n) * L_n[..., None]
    return float(np.mean(np.abs(low)) + np.mean(np.abs(high)))


def combine_decomposition(re: float, rs: float, mc: float, is_: float, w: LossWeights = LossWeights()) -> float:
    return re + w.w_rs * rs + w.w_mc * mc + w.w_is * is_


def loss_decomposition(I_l, R_l, L_l, N_l, I_n, R_n, L_n, w: LossWeights = LossWeights()) -> float:
    return combine_decomposition(
        loss_re(I_l, R_l, L_l, N_l, I_n, R_n, L_n),
        loss_rs(R_l, R_n),
        loss_mc(L_l, L_n, w.mutual_c),
        loss_is(L_l, L_n, I_l, I_n, w.smooth_eps),
        w,
    )


def loss_enhancement(R_re, R_n, L_en, L_n) -> float:
    R_re, R_n = _same(R_re, R_n)
    L_en, L_n = _same(L_en, L_n)
    ex, ey = forward_gradients(L_en)
    nx, ny = forward_gradients(L_n)
    grad_term = 0.5 * (np.mean(np.abs(ex - nx)) + np.mean(np.abs(ey - ny)))
    return float(
        np.mean(np.abs(R_re - R_n))
        + (1.0 - ssim(R_re, R_n))
        + np.mean(np.abs(L_en - L_n))
        + grad_term
    )
