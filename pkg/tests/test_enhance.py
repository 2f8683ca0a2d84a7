import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from retinex_unfold.enhance import (
    EnhanceConfig,
    adjust_illumination,
    compose,
    compute_ratio,
    enhance_pipeline,
    restore_reflectance,
)
from retinex_unfold.imgcore import DELTA_L
from retinex_unfold.metrics import psnr
from retinex_unfold.ops import BilateralParams, bilateral_filter
from retinex_unfold.unfold import UnfoldConfig, decompose
from synth import noiseless_pair, scaled_pair, smooth_color_image, textured_map


def test_compute_ratio_examples():
    L = textured_map(0) * 0.5 + 0.1
    assert compute_ratio(L, 2 * L) == pytest.approx(2.0, abs=1e-15)
    assert compute_ratio(L, L) == 1.0
    assert compute_ratio(np.array([[0.2, 0.1]]), np.array([[0.2, 0.3]])) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(ValueError):
        compute_ratio(L, L[:4])


def test_adjust_examples():
    L = textured_map(1) * 0.5 + 0.1
    np.testing.assert_array_equal(adjust_illumination(L, 1.0), L)
    assert adjust_illumination(np.array([[0.3]]), 2.0)[0, 0] == pytest.approx(0.6, abs=1e-15)
    assert adjust_illumination(np.array([[0.25]]), 2.0, "gamma_ratio")[0, 0] == 0.5
    assert adjust_illumination(np.array([[0.8]]), 3.0)[0, 0] == 1.0
    assert adjust_illumination(np.array([[0.0]]), 3.0)[0, 0] == DELTA_L
    with pytest.raises(ValueError):
        adjust_illumination(L, 0.0)
    with pytest.raises(ValueError):
        adjust_illumination(L, 1.0, "curve")


@given(arrays(np.float64, (3, 4), elements=st.floats(0.0, 1.0)), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_linear_adjust_monotone_in_ratio(L, e1, e2):
    lo, hi = sorted((e1, e2))
    assert np.all(adjust_illumination(L, lo) <= adjust_illumination(L, hi))


def test_restore_plain_pass_when_noise_free():
    R = smooth_color_image(2)
    cfg = EnhanceConfig()
    out = restore_reflectance(R, np.full(R.shape[:2], 0.5), np.zeros_like(R), cfg)
    for c in range(3):
        np.testing.assert_array_equal(out[..., c], np.clip(bilateral_filter(R[..., c], cfg.restore), 0, 1))


def test_restore_dark_input_gets_second_pass():
    R = smooth_color_image(3)
    p = EnhanceConfig().restore
    out = restore_reflectance(R, np.full(R.shape[:2], 0.1), np.zeros_like(R))
    twice = bilateral_filter(bilateral_filter(R[..., 0], p), p)
    np.testing.assert_array_equal(out[..., 0], np.clip(twice, 0, 1))


def test_restore_constant_unchanged():
    R = np.full((12, 12, 3), 0.6)
    N = np.random.default_rng(0).normal(0, 0.1, R.shape)
    np.testing.assert_array_equal(restore_reflectance(R, np.full((12, 12), 0.2), N), R)


def test_restore_noise_scale_widens_range_sigma():
    R = smooth_color_image(4)
    L = np.full(R.shape[:2], 0.5)
    N = np.full(R.shape, 0.05)
    cfg = EnhanceConfig(restore=BilateralParams(2.0, 0.1, 4))
    wide = EnhanceConfig(restore=BilateralParams(2.0, 0.2, 4))
    np.testing.assert_allclose(restore_reflectance(R, L, N, cfg), restore_reflectance(R, L, 0 * N, wide), atol=1e-15)


def test_restore_denoises_seeded_instance():
    _, clean, _ = noiseless_pair(1)
    noise = np.random.default_rng(1).normal(0, 0.1, clean.shape)
    noisy = np.clip(clean + noise, 0, 1)
    out = restore_reflectance(noisy, np.full(clean.shape[:2], 0.5), noise)
    assert psnr(out, clean) >= psnr(noisy, clean) + 2.0


def test_restore_shape_check():
    with pytest.raises(ValueError):
        restore_reflectance(np.zeros((4, 4, 3)), np.zeros((4, 5)), np.zeros((4, 4, 3)))


def test_compose_examples():
    R = smooth_color_image(5)
    np.testing.assert_array_equal(compose(np.ones(R.shape[:2]), R), R)
    assert compose(np.array([[0.5]]), np.array([[[0.8, 0.8, 0.8]]]))[0, 0, 0] == pytest.approx(0.4, abs=1e-15)
    with pytest.raises(ValueError):
        compose(np.ones((3, 3)), R)


def test_compose_reproduces_exact_decomposition():
    L, R, I = noiseless_pair(2)
    dec = decompose(I, UnfoldConfig())
    assert np.max(np.abs(compose(dec.L, dec.R) - I)) < 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_scaled_pair_oracle(seed):
    lo, hi = scaled_pair(seed)
    dec_l, dec_n = decompose(lo), decompose(hi)
    assert compute_ratio(dec_l.L, dec_n.L) == pytest.approx(4.0, rel=1e-2)
    out, _ = enhance_pipeline(lo, reference=hi)
    assert psnr(out, hi) >= 30.0
    assert abs(out.mean() / hi.mean() - 1) < 0.1


def test_unit_ratio_is_near_identity():
    img = smooth_color_image(0)
    out, _ = enhance_pipeline(img, ratio=1.0)
    assert abs(out.mean() - img.mean()) <= 2 / 255


def test_pipeline_deterministic_and_history_invariant():
    img = smooth_color_image(1) * 0.3
    a, _ = enhance_pipeline(img, ratio=3.0)
    b, _ = enhance_pipeline(img, ratio=3.0)
    c, dec = enhance_pipeline(img, ratio=3.0, unfold_cfg=UnfoldConfig(record_history=True))
    assert a.tobytes() == b.tobytes() == c.tobytes()
    assert len(dec.stage_history) == 3


def test_pipeline_argument_errors():
    img = smooth_color_image(2)
    with pytest.raises(ValueError):
        enhance_pipeline(img)
    with pytest.raises(ValueError):
        enhance_pipeline(img, reference=img[:16])
    with pytest.raises(ValueError):
        EnhanceConfig(ratio=-1.0)
    out, _ = enhance_pipeline(img, cfg=EnhanceConfig(ratio=2.0))
    assert out.shape == img.shape
