"""Histogram-of-oriented-gradients descriptor with L2 block normalization.

Orientation is unsigned over [0, pi). Bin ``b`` is centered on ``b * pi / bins``
and each pixel splits its gradient magnitude between the two nearest bin
centers (wrapping from the last bin back to bin 0), so the votes of a cell sum
to the total gradient magnitude of that cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import extract_illumination


@dataclass(frozen=True)
class HogConfig:
    cell_size: int = 8
    bins: int = 9
    block_size: int = 2
    block_stride: int = 1
    norm_epsilon: float = 1e-6

    def __post_init__(self):
        if self.cell_size < 1:
            raise ValueError("cell_size must be >= 1")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.block_size < 1 or self.block_stride < 1:
            raise ValueError("block_size and block_stride must be >= 1")
        if self.norm_epsilon < 0:
            raise ValueError("norm_epsilon must be nonnegative")


@dataclass
class HogFeature:
    values: np.ndarray
    # (blocks_x, blocks_y, block_size, bins)
    layout: tuple[int, int, int, int]

    def __len__(self):
        return self.values.size


def _luminance(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 3:
        return extract_illumination(m)
    return m


def central_gradients(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with clamped borders."""
    p = np.pad(m, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return gx, gy


def cell_histograms(m, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """Unnormalized orientation histograms, shape (cells_y, cells_x, bins)."""
    m = _luminance(m)
    h, w = m.shape
    cs = cfg.cell_size
    if h % cs or w % cs:
        raise ValueError(f"map size {h}x{w} is not a multiple of cell_size {cs}")
    gx, gy = central_gradients(m)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    pos = theta / (np.pi / cfg.bins)
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.int64) % cfg.bins
    hi = (lo + 1) % cfg.bins

    cy, cx = h // cs, w // cs
    cell_id = (np.arange(h)[:, None] // cs) * cx + (np.arange(w)[None, :] // cs)
    hist = np.zeros(cy * cx * cfg.bins)
    np.add.at(hist, (cell_id * cfg.bins + lo).ravel(), (mag * (1.0 - frac)).ravel())
    np.add.at(hist, (cell_id * cfg.bins + hi).ravel(), (mag * frac).ravel())
    return hist.reshape(cy, cx, cfg.bins)


def normalize_blocks(hist: np.ndarray, cfg: HogConfig) -> HogFeature:
    """Group cell histograms into blocks and L2-normalize each block."""
    cy, cx, bins = hist.shape
    bs, st = cfg.block_size, cfg.block_stride
    if cy < bs or cx < bs:
        raise ValueError(f"cell grid {cy}x{cx} is smaller than block_size {bs}")
    by = (cy - bs) // st + 1
    bx = (cx - bs) // st + 1
    out = np.empty((by, bx, bs * bs * bins))
    for j in range(by):
        for i in range(bx):
            v = hist[j * st : j * st + bs, i * st : i * st + bs].ravel()
            out[j, i] = v / np.sqrt(v @ v + cfg.norm_epsilon**2)
    return HogFeature(values=out.ravel(), layout=(bx, by, bs, bins))


def compute_hog(m, cfg: HogConfig = HogConfig()) -> HogFeature:
    """HOG descriptor of a map (color input is reduced to its max channel)."""
    return normalize_blocks(cell_histograms(m, cfg), cfg)


def hog_distance(a: HogFeature, b: HogFeature) -> float:
    if tuple(a.layout) != tuple(b.layout):
        raise ValueError(f"HOG layouts differ: {a.layout} vs {b.layout}")
    return float(np.mean(np.abs(a.values - b.values)))


def patch_hog_length(patch_size: int, cfg: HogConfig = HogConfig()) -> int:
    if patch_size % cfg.cell_size:
        raise ValueError(f"patch_size {patch_size} is not a multiple of cell_size {cfg.cell_size}")
    c = patch_size // cfg.cell_size
    if c < cfg.block_size:
        raise ValueError("patch holds fewer cells than one block")
    nb = (c - cfg.block_size) // cfg.block_stride + 1
    return nb * nb * cfg.block_size**2 * cfg.bins


def patch_hog_targets(m, patch_size: int, cfg: HogConfig = HogConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Per-patch HOG vectors cut from whole-image cell histograms.

    Gradients and cell histograms are computed once on the whole map, so
    pixels on a patch border see their true neighbors; block normalization is
    then applied to the cells of each patch.

    Returns ``(targets, cells)`` where ``targets`` has shape
    (n_patches, patch_hog_length) in row-major patch order and ``cells`` maps
    every target entry to the (row, col) of its cell inside the patch, shape
    (patch_hog_length, 2).
    """
    m = _luminance(m)
    h, w = m.shape
    if h % patch_size or w % patch_size:
        raise ValueError(f"map size {h}x{w} is not a multiple of patch_size {patch_size}")
    d = patch_hog_length(patch_size, cfg)
    hist = cell_histograms(m, cfg)
    c = patch_size // cfg.cell_size
    rows = []
    for py in range(h // patch_size):
        for px in range(w // patch_size):
            sub = hist[py * c : (py + 1) * c, px * c : (px + 1) * c]
            rows.append(normalize_blocks(sub, cfg).values)

    bs, st, bins = cfg.block_size, cfg.block_stride, cfg.bins
    nb = (c - bs) // st + 1
    cells = np.empty((d, 2), dtype=np.int64)
    k = 0
    for j in range(nb):
        for i in range(nb):
            for a in range(bs):
                for b in range(bs):
                    cells[k : k + bins] = (j * st + a, i * st + b)
                    k += bins
    return np.asarray(rows), cells
