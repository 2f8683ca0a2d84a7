"""Desk-scale learnable priors trained by masked image modeling.

A prior is a one-hidden-layer fully-connected autoencoder applied to
non-overlapping square patches::

    hidden     = relu(W_e @ patch + b_e)
    prediction = W_d @ hidden + b_d

Two kinds are trained:

* ``illumination``: input is a masked illumination-map patch, target is the
  bilateral-filtered illumination of the unmasked map, supervised on every
  pixel. Its encoder drives a modulation head that acts as the illumination
  proximal operator of the unfolded solver.
* ``noise``: input is a masked luminance patch, target is the patch HOG
  vector, supervised on the histogram entries of masked cells only. Its
  encoder is the gradient-representation regularizer.

Masks are drawn on ``mask_region``-sized tiles that are smaller than a patch,
so each patch keeps visible context for its hidden tiles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import expit

from .hog import HogConfig, compute_hog, hog_distance, patch_hog_length, patch_hog_targets
from .imgcore import DELTA_L, as_image, extract_illumination, gamma_transform
from .ops import BilateralParams, bilateral_filter

log = logging.getLogger(__name__)

KINDS = ("illumination", "noise")
GAMMAS = (0.5, 1.0, 2.0)


@dataclass
class PriorModel:
    kind: str
    patch_size: int
    mask_ratio: float
    W_e: np.ndarray
    b_e: np.ndarray
    W_d: np.ndarray
    b_d: np.ndarray
    # modulation head(s), illumination kind only; head2 is the optional
    # separate additive head
    head_w: np.ndarray | None = None
    head_b: np.ndarray | None = None
    head2_w: np.ndarray | None = None
    head2_b: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ValueError(f"mask_ratio must lie in [0, 1), got {self.mask_ratio}")

    @property
    def d_in(self) -> int:
        return self.W_e.shape[1]

    @property
    def d_hidden(self) -> int:
        return self.W_e.shape[0]

    @property
    def d_out(self) -> int:
        return self.W_d.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        """Weight tensors in declaration order (the serialization order)."""
        names = ["W_e", "b_e", "W_d", "b_d", "head_w", "head_b", "head2_w", "head2_b"]
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    def copy(self) -> "PriorModel":
        return replace(self, **{k: v.copy() for k, v in self.params().items()})


@dataclass(frozen=True)
class PriorConfig:
    patch_size: int = 16
    mask_ratio: float = 0.75
    mask_region: int = 8
    hidden: int = 32
    split_heads: bool = False


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch: int = 16
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    seed: int = 0
    lr_halving_interval: int = 0  # steps; 0 disables the schedule

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1:
            raise ValueError("epochs must be >= 0 and batch >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")


def init_prior(
    kind: str,
    patch_size: int = 16,
    hidden: int = 32,
    seed: int = 0,
    mask_ratio: float = 0.75,
    d_out: int | None = None,
    hog_cfg: HogConfig = HogConfig(),
    split_heads: bool = False,
) -> PriorModel:
    """Seeded uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
    if kind not in KINDS:
        raise ValueError(f"unknown prior kind {kind!r}")
    d_in = patch_size * patch_size
    if d_out is None:
        d_out = d_in if kind == "illumination" else patch_hog_length(patch_size, hog_cfg)
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        a = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-a, a, size=shape)

    model = PriorModel(
        kind=kind,
        patch_size=patch_size,
        mask_ratio=mask_ratio,
        W_e=uniform((hidden, d_in), d_in),
        b_e=uniform((hidden,), d_in),
        W_d=uniform((d_out, hidden), hidden),
        b_d=uniform((d_out,), hidden),
    )
    if kind == "illumination":
        model.head_w = uniform((hidden,), hidden)
        model.head_b = uniform((1,), hidden)
        if split_heads:
            model.head2_w = uniform((hidden,), hidden)
            model.head2_b = uniform((1,), hidden)
    return model


# ---------------------------------------------------------------------------
# patches and masking


def to_patches(m: np.ndarray, patch_size: int) -> np.ndarray:
    """Row-major non-overlapping patches, shape (n_patches, patch_size**2)."""
    h, w = m.shape
    if h % patch_size or w % patch_size:
        raise ValueError(f"map size {h}x{w} is not a multiple of patch_size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    p = m.reshape(gh, patch_size, gw, patch_size).transpose(0, 2, 1, 3)
    return p.reshape(gh * gw, patch_size * patch_size)


def mask_regions(m, mask_ratio: float, region: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Zero out floor(mask_ratio * n_tiles) randomly chosen region x region tiles.

    ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    m = np.asarray(m, dtype=np.float64)
    h, w = m.shape
    if h % region or w % region:
        raise ValueError(f"map size {h}x{w} is not a multiple of region {region}")
    if not 0.0 <= mask_ratio < 1.0:
        raise ValueError(f"mask_ratio must lie in [0, 1), got {mask_ratio}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    gh, gw = h // region, w // region
    n = gh * gw
    k = int(np.floor(mask_ratio * n))
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.permutation(n)[:k]] = True
    mask = np.kron(chosen.reshape(gh, gw), np.ones((region, region), dtype=bool)).astype(bool)
    return np.where(mask, 0.0, m), mask


# ---------------------------------------------------------------------------
# forward / backward


def mae_forward(model: PriorModel, patch_in) -> tuple[np.ndarray, np.ndarray]:
    """Forward pass for one patch vector or a batch of shape (n, d_in)."""
    x = np.asarray(patch_in, dtype=np.float64)
    if x.shape[-1] != model.d_in:
        raise ValueError(f"input length {x.shape[-1]} does not match d_in {model.d_in}")
    hidden = np.maximum(x @ model.W_e.T + model.b_e, 0.0)
    return hidden, hidden @ model.W_d.T + model.b_d


def mae_loss_and_grads(model: PriorModel, inputs, targets, supervised=None) -> tuple[float, dict]:
    """Mean squared error over supervised target entries and its weight gradients.

    ``supervised`` is a boolean array shaped like ``targets`` (or one flag per
    sample); ``None`` supervises everything.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if supervised is None:
        sup = np.ones(t.shape, dtype=bool)
    else:
        sup = np.asarray(supervised, dtype=bool)
        if sup.size == t.size:
            sup = sup.reshape(t.shape)
        elif sup.ndim == 1 and sup.size == t.shape[0]:
            sup = np.repeat(sup[:, None], t.shape[1], axis=1)
        else:
            raise ValueError(f"supervision mask shape {sup.shape} does not fit targets {t.shape}")
    count = int(sup.sum())
    if count == 0:
        raise ValueError("no supervised entries in batch")

    pre = x @ model.W_e.T + model.b_e
    hidden = np.maximum(pre, 0.0)
    pred = hidden @ model.W_d.T + model.b_d
    err = np.where(sup, pred - t, 0.0)
    loss = float(np.sum(err * err) / count)

    d_pred = 2.0 * err / count
    d_hidden = d_pred @ model.W_d
    d_pre = d_hidden * (pre > 0)
    grads = {
        "W_e": d_pre.T @ x,
        "b_e": d_pre.sum(axis=0),
        "W_d": d_pred.T @ hidden,
        "b_d": d_pred.sum(axis=0),
    }
    for name in ("head_w", "head_b", "head2_w", "head2_b"):
        if getattr(model, name) is not None:
            grads[name] = np.zeros_like(getattr(model, name))
    return loss, grads


def modulation_loss_and_grads(model: PriorModel, inputs, targets) -> tuple[float, dict]:
    """Fit of the modulation head so that ``L * s + a`` matches a target patch.

    ``s = sigmoid(head(hidden))`` and ``a = s`` unless a second head exists.
    The encoder is treated as fixed; only the head gradients are nonzero.
    """
    if model.head_w is None:
        raise ValueError("model has no modulation head")
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    hidden, _ = mae_forward(model, x)
    s = expit(hidden @ model.head_w + model.head_b[0])
    if model.head2_w is not None:
        a = expit(hidden @ model.head2_w + model.head2_b[0])
    else:
        a = s
    err = x * s[:, None] + a[:, None] - t
    loss = float(np.mean(err * err))
    d_out = 2.0 * err / err.size
    grads = {k: np.zeros_like(v) for k, v in model.params().items()}
    if model.head2_w is not None:
        dz = (d_out * x).sum(axis=1) * s * (1 - s)
        dz2 = d_out.sum(axis=1) * a * (1 - a)
        grads["head2_w"] = dz2 @ hidden
        grads["head2_b"] = np.array([dz2.sum()])
    else:
        dz = (d_out * (x + 1.0)).sum(axis=1) * s * (1 - s)
    grads["head_w"] = dz @ hidden
    grads["head_b"] = np.array([dz.sum()])
    return loss, grads


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with bias correction; updates the model's arrays in place."""

    def __init__(self, model: PriorModel, lr: float, beta1: float, beta2: float, eps: float = 1e-8,
                 halving_interval: int = 0):
        self.model = model
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.halving_interval = halving_interval
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in model.params().items()}
        self.v = {k: np.zeros_like(v) for k, v in model.params().items()}

    def step(self, grads: dict, names=None):
        self.t += 1
        lr = self.lr
        if self.halving_interval > 0:
            lr *= 0.5 ** ((self.t - 1) // self.halving_interval)
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name in names or grads:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p = getattr(self.model, name)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def fit(model: PriorModel, inputs, targets, supervised=None, steps: int = 100, lr: float = 1e-3,
        beta1: float = 0.9, beta2: float = 0.99) -> list[float]:
    """Full-batch Adam on a fixed sample set; returns the loss before each step."""
    opt = Adam(model, lr, beta1, beta2)
    losses = []
    for _ in range(steps):
        loss, grads = mae_loss_and_grads(model, inputs, targets, supervised)
        losses.append(loss)
        opt.step(grads)
    return losses


# ---------------------------------------------------------------------------
# training


def _illumination_samples(images, rng, cfg: PriorConfig, bil: BilateralParams, cache):
    xs, ts = [], []
    for i, img in enumerate(images):
        g = GAMMAS[rng.integers(len(GAMMAS))]
        key = (i, g)
        if key not in cache:
            L = extract_illumination(gamma_transform(img, g))
            cache[key] = (L, bilateral_filter(L, bil))
        L, target = cache[key]
        masked, _ = mask_regions(L, cfg.mask_ratio, cfg.mask_region, rng)
        xs.append(to_patches(masked, cfg.patch_size))
        ts.append(to_patches(target, cfg.patch_size))
    x = np.concatenate(xs)
    t = np.concatenate(ts)
    return x, t, np.ones(t.shape, dtype=bool)


def _noise_samples(images, rng, cfg: PriorConfig, hog_cfg: HogConfig, cache):
    xs, ts, sups = [], [], []
    p = cfg.patch_size
    for i, img in enumerate(images):
        if i not in cache:
            lum = extract_illumination(img)
            cache[i] = (lum, *patch_hog_targets(lum, p, hog_cfg))
        lum, targets, cells = cache[i]
        masked, mask = mask_regions(lum, cfg.mask_ratio, cfg.mask_region, rng)
        # a cell counts as masked if any of its pixels is hidden
        cs = hog_cfg.cell_size
        h, w = mask.shape
        cell_masked = mask.reshape(h // cs, cs, w // cs, cs).any(axis=(1, 3))
        c = p // cs
        gw = w // p
        sup = np.empty(targets.shape, dtype=bool)
        for n in range(targets.shape[0]):
            py, px = divmod(n, gw)
            sup[n] = cell_masked[py * c + cells[:, 0], px * c + cells[:, 1]]
        keep = sup.any(axis=1)
        xs.append(to_patches(masked, p)[keep])
        ts.append(targets[keep])
        sups.append(sup[keep])
    return np.concatenate(xs), np.concatenate(ts), np.concatenate(sups)


def _check_dims(images, cfg: PriorConfig, hog_cfg: HogConfig, kind: str):
    if cfg.patch_size % cfg.mask_region:
        raise ValueError("mask_region must divide patch_size")
    if kind == "noise" and cfg.patch_size % hog_cfg.cell_size:
        raise ValueError("hog cell_size must divide patch_size")
    for img in images:
        h, w = img.shape[:2]
        if h % cfg.patch_size or w % cfg.patch_size:
            raise ValueError(f"training image {h}x{w} is not a multiple of patch_size {cfg.patch_size}")


def train_prior(
    kind: str,
    images,
    tc: TrainConfig = TrainConfig(),
    cfg: PriorConfig = PriorConfig(),
    hog_cfg: HogConfig = HogConfig(),
    bilateral: BilateralParams = BilateralParams(),
    on_epoch: Callable[[int, float], None] | None = None,
) -> PriorModel:
    """Train a prior on a list of images and return it.

    Each epoch draws fresh augmentations and masks, shuffles the patch
    samples and takes one Adam step per mini-batch of ``tc.batch`` patches.
    The mean batch loss of every epoch is passed to ``on_epoch(epoch, loss)``.

    For the illumination kind the modulation head is fitted afterwards for
    ``tc.epochs`` full-batch steps with the encoder frozen, so that the
    modulated map approximates the bilateral-filtered illumination.
    """
    images = [as_image(im) for im in images]
    if not images:
        raise ValueError("train_prior needs at least one image")
    _check_dims(images, cfg, hog_cfg, kind)
    model = init_prior(kind, cfg.patch_size, cfg.hidden, tc.seed, cfg.mask_ratio,
                       hog_cfg=hog_cfg, split_heads=cfg.split_heads)
    rng = np.random.default_rng(tc.seed)
    opt = Adam(model, tc.lr, tc.beta1, tc.beta2, halving_interval=tc.lr_halving_interval)
    ae_params = ["W_e", "b_e", "W_d", "b_d"]
    cache: dict = {}

    for epoch in range(tc.epochs):
        if kind == "illumination":
            x, t, sup = _illumination_samples(images, rng, cfg, bilateral, cache)
        else:
            x, t, sup = _noise_samples(images, rng, cfg, hog_cfg, cache)
        order = rng.permutation(x.shape[0])
        losses = []
        for start in range(0, len(order), tc.batch):
            idx = order[start : start + tc.batch]
            if not sup[idx].any():
                continue
            loss, grads = mae_loss_and_grads(model, x[idx], t[idx], sup[idx])
            losses.append(loss)
            opt.step(grads, ae_params)
        epoch_loss = float(np.mean(losses)) if losses else float("nan")
        log.info("prior %s epoch %d loss %.6g", kind, epoch + 1, epoch_loss)
        if on_epoch is not None:
            on_epoch(epoch + 1, epoch_loss)

    if kind == "illumination" and tc.epochs > 0:
        _fit_head(model, images, tc, cfg, bilateral, cache)
    return model


def _fit_head(model, images, tc, cfg, bilateral, cache):
    xs, ts = [], []
    for i, img in enumerate(images):
        for g in GAMMAS:
            key = (i, g)
            if key not in cache:
                L = extract_illumination(gamma_transform(img, g))
                cache[key] = (L, bilateral_filter(L, bilateral))
            L, target = cache[key]
            xs.append(to_patches(L, cfg.patch_size))
            ts.append(to_patches(target, cfg.patch_size))
    x = np.concatenate(xs)
    t = np.concatenate(ts)
    names = [n for n in ("head_w", "head_b", "head2_w", "head2_b") if getattr(model, n) is not None]
    opt = Adam(model, tc.lr, tc.beta1, tc.beta2)
    for _ in range(tc.epochs):
        loss, grads = modulation_loss_and_grads(model, x, t)
        opt.step(grads, names)
    log.info("prior head fit loss %.6g", loss)


# ---------------------------------------------------------------------------
# inference


def encode(model: PriorModel, m) -> np.ndarray:
    """Encoder features of every patch, shape (grid_h, grid_w, d_hidden)."""
    m = np.asarray(m, dtype=np.float64)
    h, w = m.shape
    p = model.patch_size
    hidden, _ = mae_forward(model, to_patches(m, p))
    return hidden.reshape(h // p, w // p, model.d_hidden)


def modulation_maps(model: PriorModel, m, split: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (multiplier, addend) maps from the modulation head(s)."""
    if model.kind != "illumination" or model.head_w is None:
        raise ValueError("learned illumination prox needs an illumination-kind prior")
    feats = encode(model, m)
    p = model.patch_size
    block = np.ones((p, p))
    s = np.kron(expit(feats @ model.head_w + model.head_b[0]), block)
    if split:
        if model.head2_w is None:
            raise ValueError("split modulation heads requested but the model has one head")
        a = np.kron(expit(feats @ model.head2_w + model.head2_b[0]), block)
    else:
        a = s
    return s, a


def learned_prox_L(model: PriorModel, Lmid, split: bool = False) -> np.ndarray:
    """Modulated illumination ``Lmid * m + m`` clamped to [DELTA_L, 1]."""
    Lmid = np.asarray(Lmid, dtype=np.float64)
    s, a = modulation_maps(model, Lmid, split)
    return np.clip(Lmid * s + a, DELTA_L, 1.0)


def gradient_rep_loss(model_or_cfg, I_en, I_n) -> float:
    """Gradient-representation distance between two images.

    With a noise-kind ``PriorModel`` this is the mean absolute difference of
    encoder features of the two luminance maps. With a ``HogConfig`` (or
    ``None`` for the default configuration) it is the HOG distance.
    """
    a = extract_illumination(as_image(I_en))
    b = extract_illumination(as_image(I_n))
    if a.shape != b.shape:
        raise ValueError(f"image sizes differ: {a.shape} vs {b.shape}")
    if isinstance(model_or_cfg, PriorModel):
        return float(np.mean(np.abs(encode(model_or_cfg, a) - encode(model_or_cfg, b))))
    cfg = model_or_cfg if model_or_cfg is not None else HogConfig()
    return hog_distance(compute_hog(a, cfg), compute_hog(b, cfg))
