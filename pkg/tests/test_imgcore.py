import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image as PILImage

from retinex_unfold.imgcore import (
    DELTA_L,
    ImageFormatError,
    as_image,
    extract_illumination,
    gamma_transform,
    init_decomposition,
    load_image,
    save_image,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
rgb_images = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3)), elements=unit)


def _png(path, pixel, mode="RGB"):
    PILImage.new(mode, (1, 1), pixel).save(path)
    return path


@pytest.mark.parametrize(
    "pixel, expected",
    [((255, 255, 255), (1.0, 1.0, 1.0)), ((0, 0, 0), (0.0, 0.0, 0.0)), ((51, 102, 204), (0.2, 0.4, 0.8))],
)
def test_load_scales_bytes(tmp_path, pixel, expected):
    img = load_image(_png(tmp_path / "p.png", pixel))
    assert img.shape == (1, 1, 3)
    assert tuple(img[0, 0]) == expected


def test_load_grayscale(tmp_path):
    img = load_image(_png(tmp_path / "g.png", 51, mode="L"))
    assert img.shape == (1, 1, 1)
    assert img[0, 0, 0] == 0.2


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "missing.png")
    PILImage.new("P", (2, 2)).save(tmp_path / "pal.png")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "pal.png")
    PILImage.new("I;16", (2, 2)).save(tmp_path / "deep.png")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "deep.png")


@pytest.mark.parametrize("value, byte", [(0.5, 128), (1.0, 255), (0.0, 0)])
def test_save_rounds_half_up(tmp_path, value, byte):
    save_image(np.full((1, 1, 3), value), tmp_path / "o.png")
    with PILImage.open(tmp_path / "o.png") as im:
        assert np.asarray(im)[0, 0, 0] == byte


@settings(max_examples=30, deadline=None)
@given(rgb_images)
def test_save_load_roundtrip_bound(tmp_path_factory, img):
    path = tmp_path_factory.mktemp("rt") / "x.png"
    save_image(img, path)
    assert np.max(np.abs(load_image(path) - img)) <= 1 / 510 + 1e-15


def test_as_image_rejects_out_of_range():
    with pytest.raises(ValueError):
        as_image(np.full((2, 2, 3), 1.5))
    with pytest.raises(ValueError):
        as_image(np.zeros((2, 2, 2)))


def test_extract_illumination_examples():
    assert extract_illumination(np.array([[[0.2, 0.5, 0.3]]]))[0, 0] == 0.5
    assert not extract_illumination(np.zeros((3, 4, 3))).any()
    gray = np.random.default_rng(0).uniform(size=(4, 5, 1))
    np.testing.assert_array_equal(extract_illumination(gray), gray[..., 0])


@given(rgb_images)
def test_extract_illumination_dominates_channels(img):
    L = extract_illumination(img)
    assert np.all(L[..., None] >= img)


def test_gamma_examples():
    v = np.array([[0.25, 1.0, 0.0]])
    np.testing.assert_array_equal(gamma_transform(v, 1.0), v)
    assert gamma_transform(v, 0.5)[0, 0] == 0.5
    assert gamma_transform(v, 3.7)[0, 1] == 1.0
    with pytest.raises(ValueError):
        gamma_transform(v, 0.0)
    with pytest.raises(ValueError):
        gamma_transform(v, -1.0)


@given(rgb_images, st.floats(0.2, 5.0), st.floats(0.2, 5.0))
def test_gamma_composition(img, a, b):
    lhs = gamma_transform(gamma_transform(img, a), b)
    np.testing.assert_allclose(lhs, gamma_transform(img, a * b), rtol=0, atol=1e-12)


def test_init_examples():
    d = init_decomposition(np.full((2, 2, 3), 0.5))
    assert np.all(d.L == 0.5) and np.all(d.R == 1.0) and not d.N.any()

    d = init_decomposition(np.zeros((2, 2, 3)))
    assert np.all(d.L == DELTA_L) and not d.R.any() and not d.N.any()

    d = init_decomposition(np.array([[[0.2, 0.4, 0.8]]]))
    assert d.L[0, 0] == 0.8
    np.testing.assert_array_equal(d.R[0, 0], [0.25, 0.5, 1.0])


@given(arrays(np.float64, (4, 4, 3), elements=st.floats(DELTA_L, 1.0)))
def test_init_reconstructs(img):
    d = init_decomposition(img)
    assert np.max(np.abs(img - d.reconstruct())) <= DELTA_L
    assert d.L.min() >= DELTA_L
    assert d.R.min() >= 0 and d.R.max() <= 1
