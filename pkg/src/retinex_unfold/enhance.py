"""Illumination adjustment, reflectance restoration and recomposition."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .imgcore import DELTA_L, Decomposition, as_image, as_map
from .ops import BilateralParams, bilateral_filter
from .unfold import UnfoldConfig, decompose

ADJUST_MODES = ("linear_ratio", "gamma_ratio")


@dataclass
class EnhanceConfig:
    # None means: derive the ratio from a normal-light reference
    ratio: float | None = None
    adjust_mode: str = "linear_ratio"
    restore: BilateralParams = field(default_factory=lambda: BilateralParams(2.0, 0.1, 4))
    noise_gain: float = 1.0
    noise_ref: float = 0.05
    dark_threshold: float = 0.3

    def __post_init__(self):
        if self.ratio is not None and not self.ratio > 0:
            raise ValueError(f"ratio must be positive, got {self.ratio}")
        if self.adjust_mode not in ADJUST_MODES:
            raise ValueError(f"adjust_mode must be one of {ADJUST_MODES}, got {self.adjust_mode!r}")
        if self.noise_ref <= 0:
            raise ValueError("noise_ref must be positive")


def compute_ratio(L_l, L_n) -> float:
    """Mean per-pixel brightness ratio L_n / L_l."""
    L_l, L_n = as_map(L_l), as_map(L_n)
    if L_l.shape != L_n.shape:
        raise ValueError(f"illumination sizes differ: {L_l.shape} vs {L_n.shape}")
    return float(np.mean(L_n / np.maximum(L_l, DELTA_L)))


def adjust_illumination(L, ratio: float, mode: str = "linear_ratio") -> np.ndarray:
    if not ratio > 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    L = as_map(L)
    if mode == "linear_ratio":
        out = ratio * L
    elif mode == "gamma_ratio":
        out = np.power(L, 1.0 / ratio)
    else:
        raise ValueError(f"adjust_mode must be one of {ADJUST_MODES}, got {mode!r}")
    return np.clip(out, DELTA_L, 1.0)


def restore_reflectance(R, L, N, cfg: EnhanceConfig = EnhanceConfig()) -> np.ndarray:
    """Bilateral restoration of R with strength driven by the noise and darkness.

    The range sigma grows with the mean noise magnitude, and dark inputs
    (mean illumination below ``dark_threshold``) get a second pass.
    """
    R = np.asarray(R, dtype=np.float64)
    N = np.asarray(N, dtype=np.float64)
    L = as_map(L)
    if R.shape != N.shape or R.shape[:2] != L.shape:
        raise ValueError(f"shape mismatch: R {R.shape}, L {L.shape}, N {N.shape}")
    scale = 1.0 + cfg.noise_gain * float(np.mean(np.abs(N))) / cfg.noise_ref
    p = replace(cfg.restore, sigma_range=cfg.restore.sigma_range * scale)
    passes = 2 if float(np.mean(L)) < cfg.dark_threshold else 1
    out = np.empty_like(R)
    for c in range(R.shape[2]):
        ch = R[..., c]
        for _ in range(passes):
            ch = bilateral_filter(ch, p)
        out[..., c] = ch
    return np.clip(out, 0.0, 1.0)


def compose(L_en, R_re) -> np.ndarray:
    L_en = as_map(L_en)
    R_re = np.asarray(R_re, dtype=np.float64)
    if R_re.ndim != 3 or R_re.shape[:2] != L_en.shape:
        raise ValueError(f"shape mismatch: L {L_en.shape}, R {R_re.shape}")
    return np.clip(L_en[..., None] * R_re, 0.0, 1.0)


def enhance_pipeline(
    I_l,
    ratio: float | None = None,
    reference=None,
    unfold_cfg: UnfoldConfig | None = None,
    cfg: EnhanceConfig | None = None,
) -> tuple[np.ndarray, Decomposition]:
    """Decompose, brighten the illumination, restore reflectance, recompose.

    The brightness ratio is ``ratio`` if given, else ``cfg.ratio``, else it is
    estimated from the illumination of the decomposed ``reference`` image.
    """
    cfg = cfg or EnhanceConfig()
    unfold_cfg = unfold_cfg or UnfoldConfig()
    I_l = as_image(I_l)
    dec = decompose(I_l, unfold_cfg)
    eps = ratio if ratio is not None else cfg.ratio
    if eps is None:
        if reference is None:
            raise ValueError("need a ratio or a reference image")
        ref = as_image(reference)
        if ref.shape[:2] != I_l.shape[:2]:
            raise ValueError(f"reference size {ref.shape[:2]} differs from input {I_l.shape[:2]}")
        eps = compute_ratio(dec.L, decompose(ref, unfold_cfg).L)
    L_en = adjust_illumination(dec.L, eps, cfg.adjust_mode)
    R_re = restore_reflectance(dec.R, dec.L, dec.N, cfg)
    return compose(L_en, R_re), dec
