import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from retinex_unfold.config import FIELDS, ConfigError, RunConfig, parse_config, parse_text
from retinex_unfold.formats import (
    FormatError,
    load_model,
    model_from_bytes,
    model_to_bytes,
    read_tensor,
    save_model,
    tensor_from_bytes,
    tensor_to_bytes,
    write_tensor,
)
from retinex_unfold.priors import init_prior

# tensor files -----------------------------------------------------------


def test_tensor_header_layout():
    buf = tensor_to_bytes(np.arange(6.0).reshape(2, 3))
    assert buf[:4] == b"CUET"
    assert struct.unpack_from("<IIII", buf, 4) == (1, 2, 2, 3)
    assert len(buf) == 20 + 6 * 8
    assert struct.unpack_from("<d", buf, 20 + 8 * 4)[0] == 4.0


@given(arrays(np.float64, array_shapes(min_dims=0, max_dims=4, max_side=5)))
def test_tensor_roundtrip_bit_exact(a):
    b = tensor_from_bytes(tensor_to_bytes(a))
    assert b.shape == a.shape
    assert b.tobytes() == a.tobytes()


def test_tensor_file_roundtrip(tmp_path):
    a = np.random.default_rng(0).normal(size=(4, 5, 3))
    a[0, 0, 0] = -0.0
    write_tensor(tmp_path / "a.cuet", a)
    assert read_tensor(tmp_path / "a.cuet").tobytes() == a.tobytes()


def test_tensor_rejects_corruption():
    buf = tensor_to_bytes(np.ones((2, 2)))
    with pytest.raises(FormatError):
        tensor_from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        tensor_from_bytes(buf[:-1])
    with pytest.raises(FormatError):
        tensor_from_bytes(buf[:4] + struct.pack("<I", 2) + buf[8:])


# model files ------------------------------------------------------------


@pytest.mark.parametrize("kind, split", [("illumination", False), ("illumination", True), ("noise", False)])
def test_model_roundtrip(tmp_path, kind, split):
    m = init_prior(kind, patch_size=16, hidden=8, seed=3, split_heads=split)
    save_model(tmp_path / "m.cuep", m)
    back = load_model(tmp_path / "m.cuep")
    assert (back.kind, back.patch_size, back.mask_ratio) == (m.kind, m.patch_size, m.mask_ratio)
    for k, v in m.params().items():
        assert back.params()[k].tobytes() == v.tobytes()
    assert model_to_bytes(back) == model_to_bytes(m)


def test_model_header_layout():
    buf = model_to_bytes(init_prior("noise", patch_size=16, hidden=8, seed=0))
    assert buf[:4] == b"CUEP"
    assert struct.unpack_from("<IB", buf, 4) == (1, 1)
    assert struct.unpack_from("<5I", buf, 9) == (16, 256, 8, 36, 0)
    assert struct.unpack_from("<d", buf, 29)[0] == 0.75


def test_model_rejects_corruption():
    buf = model_to_bytes(init_prior("illumination", patch_size=4, hidden=2, seed=0))
    for bad in (b"NOPE" + buf[4:], buf[:-8], buf + b"\0"):
        with pytest.raises(FormatError):
            model_from_bytes(bad)


# config -----------------------------------------------------------------


def test_empty_config_is_defaults(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# nothing\n\n")
    cfg = parse_config(p)
    assert cfg == RunConfig()
    assert cfg["unfold.stages"] == 3 and cfg["unfold.mu0"] == 1.0 and cfg["prior.mask_ratio"] == 0.75
    assert cfg.loss_weights().w_rs == 0.009
    assert cfg.enhance_config().ratio is None


def test_config_values_and_overrides(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("unfold.stages = 5   # more stages\nenhance.ratio = 2.5\nunfold.record_history = yes\n")
    cfg = parse_config(p, {"unfold.mu0": "2.0"})
    assert cfg.unfold_config().stages == 5
    assert cfg.unfold_config().mu0 == 2.0
    assert cfg.unfold_config().record_history
    assert cfg.enhance_config().ratio == 2.5
    assert parse_config(p, {"unfold.stages": "1"})["unfold.stages"] == 1


@pytest.mark.parametrize(
    "text, key, line",
    [
        ("unfold.stages = -1", "unfold.stages", 1),
        ("\nunfold.stagez = 3", "unfold.stagez", 2),
        ("train.lr = fast", "train.lr", 1),
        ("prior.mask_ratio = 1.0", "prior.mask_ratio", 1),
        ("unfold.prox_L = magic", "unfold.prox_L", 1),
    ],
)
def test_config_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as err:
        parse_text(text)
    assert err.value.key == key and err.value.line == line
    assert key in str(err.value)


def test_config_missing_equals():
    with pytest.raises(ConfigError) as err:
        parse_text("a\n")
    assert err.value.line == 1


def test_config_roundtrip_identity():
    cfg = parse_text("unfold.stages = 7\ntrain.lr = 0.000123\nenhance.ratio = 3\nunfold.split_heads = true\n"
                     "run.input = a b.png\nunfold.mu0 = 0.1\n")
    assert parse_text(cfg.to_text()) == cfg
    assert parse_text(RunConfig().to_text()) == RunConfig()


@given(st.floats(1e-12, 1e12), st.integers(0, 1000))
def test_config_roundtrip_property(mu0, stages):
    cfg = RunConfig({"unfold.mu0": mu0, "unfold.stages": stages})
    assert parse_text(cfg.to_text()) == cfg


def test_every_field_has_valid_default():
    cfg = RunConfig()
    for k, f in FIELDS.items():
        assert f.check(cfg[k]), k
    cfg.unfold_config(), cfg.hog_config(), cfg.prior_config(), cfg.train_config()
