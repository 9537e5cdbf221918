import struct
from dataclasses import replace
import zlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diffsigma.model import (
    PRESETS, FireConfig, ModelFormatError, build_network, fire_forward, forward, load_model,
    micro_config, model_from_bytes, model_to_bytes, paper_config, predict_sigma, save_model,
)
from diffsigma.nn.layers import LayerParams
from diffsigma.noise import DifferenceImage


def _fire_params(c_in, s, e1, e3, fill=0.0):
    return {
        "squeeze1x1": LayerParams(np.full((s, c_in, 1, 1), fill), np.zeros(s)),
        "expand1x1": LayerParams(np.full((e1, s, 1, 1), fill), np.zeros(e1)),
        "expand3x3": LayerParams(np.full((e3, s, 3, 3), fill), np.zeros(e3)),
    }


def test_fire_shape():
    rng = np.random.default_rng(0)
    params = _fire_params(4, 2, 3, 3)
    for p in params.values():
        p.weights[...] = rng.normal(size=p.weights.shape)
    out = fire_forward(rng.normal(size=(1, 4, 8, 8)), FireConfig(2, 3, 3), params)
    assert out.shape == (1, 6, 8, 8)


def test_fire_zero_weights():
    out = fire_forward(np.ones((1, 4, 8, 8)), FireConfig(2, 3, 3), _fire_params(4, 2, 3, 3))
    assert not out.any()


def test_fire_single_pixel_trace():
    # squeeze: 2*x + 1 -> 7 ; expand1x1: -1*7 -> relu 0 ; expand3x3 centre tap 0.5 -> 3.5 plus bias 1
    params = _fire_params(1, 1, 1, 1)
    params["squeeze1x1"].weights[...] = 2.0
    params["squeeze1x1"].bias[...] = 1.0
    params["expand1x1"].weights[...] = -1.0
    params["expand3x3"].weights[0, 0, 1, 1] = 0.5
    params["expand3x3"].weights[0, 0, 0, 0] = 100.0  # only sees padding
    params["expand3x3"].bias[...] = 1.0
    out = fire_forward(np.full((1, 1, 1, 1), 3.0), FireConfig(1, 1, 1), params)
    assert out.reshape(-1).tolist() == [0.0, 4.5]


def test_fire_channel_mismatch():
    with pytest.raises(ValueError):
        fire_forward(np.zeros((1, 3, 4, 4)), FireConfig(2, 3, 3), _fire_params(4, 2, 3, 3))


@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8))
def test_fire_config_rule(s, e1, e3):
    if s < e1 + e3:
        assert FireConfig(s, e1, e3).out_channels == e1 + e3
    else:
        with pytest.raises(ValueError):
            FireConfig(s, e1, e3)


def test_fire_config_counts_positive():
    with pytest.raises(ValueError):
        FireConfig(0, 1, 1)


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_presets_satisfy_fire_rule(preset):
    cfg = PRESETS[preset]()
    assert [len(s) for s in cfg.fire_stages] == [3, 4, 1]
    assert all(f.s1x1 < f.e1x1 + f.e3x3 for s in cfg.fire_stages for f in s)


def _closed_form_count(cfg):
    filters, k, _ = cfg.conv1
    total = filters * (cfg.input_channels * k * k + 1)
    c = filters
    for stage in cfg.fire_stages:
        for f in stage:
            total += f.s1x1 * (c + 1) + f.e1x1 * (f.s1x1 + 1) + f.e3x3 * (9 * f.s1x1 + 1)
            c = f.e1x1 + f.e3x3
    total += cfg.embed_channels * (c + 1)
    return total + cfg.output_width * (cfg.embed_channels + 1)


@pytest.mark.parametrize("head", ["regression", "classification"])
def test_parameter_count_closed_form(head):
    cfg = micro_config(head)
    assert build_network(cfg).parameter_count() == _closed_form_count(cfg)


def test_paper_parameter_count():
    cfg = paper_config()
    assert _closed_form_count(cfg) == 96 * 50 + sum(
        s * (c + 1) + e1 * (s + 1) + e3 * (9 * s + 1)
        for c, (s, e1, e3) in zip(
            [96, 128, 128, 256, 256, 384, 384, 512],
            [(16, 64, 64), (16, 64, 64), (32, 128, 128), (32, 128, 128),
             (48, 192, 192), (48, 192, 192), (64, 256, 256), (64, 256, 256)],
        )
    ) + 512 * 513 + 513


@pytest.mark.parametrize("head,width", [("regression", 1), ("classification", 5)])
def test_output_shapes(head, width):
    model = build_network(micro_config(head))
    out = forward(model, np.random.default_rng(0).normal(size=(3, 1, 32, 32)) * 20)
    assert out.shape == (3, width)
    assert np.all(np.isfinite(out))


def test_paper_preset_output_shape():
    model = build_network(paper_config("classification"))
    assert forward(model, np.zeros((1, 1, 64, 64))).shape == (1, 5)


def test_patch_too_small_rejected():
    with pytest.raises(ValueError):
        micro_config(patch_size=8)


def test_duplicate_rows_identical():
    model = build_network(micro_config("classification"), seed=3)
    x = np.random.default_rng(1).normal(size=(1, 1, 32, 32)) * 10
    out = forward(model, np.concatenate([x, np.zeros_like(x), x]))
    assert np.array_equal(out[0], out[2])


def test_zero_input_zero_bias_gives_zero_logits():
    model = build_network(micro_config("classification"), seed=4)
    assert all(not p.bias.any() for _, p in model.parameters())
    assert not forward(model, np.zeros((2, 1, 32, 32))).any()


def test_forward_is_pure():
    model = build_network(micro_config(), seed=5)
    before = [p.weights.copy() for _, p in model.parameters()]
    x = np.random.default_rng(2).normal(size=(4, 1, 32, 32)) * 15
    a, b = forward(model, x), forward(model, x)
    assert np.array_equal(a, b)
    assert all(np.array_equal(w, p.weights) for w, (_, p) in zip(before, model.parameters()))


def test_forward_shape_mismatch():
    with pytest.raises(ValueError):
        forward(build_network(micro_config()), np.zeros((1, 3, 32, 32)))


def test_build_is_deterministic():
    a, b = build_network(micro_config(), seed=9), build_network(micro_config(), seed=9)
    assert model_to_bytes(a) == model_to_bytes(b)
    assert model_to_bytes(a) != model_to_bytes(build_network(micro_config(), seed=10))


def _randomised_model(seed=0, **kw):
    model = build_network(micro_config(**kw), seed=seed)
    rng = np.random.default_rng(seed)
    for _, p in model.parameters():
        p.bias[...] = rng.normal(size=p.bias.shape) * 0.1
    model.parameters()[-1][1].bias[...] = 12.0
    return model


def test_predict_sigma_single_full_patch():
    model = _randomised_model()
    diff = DifferenceImage(np.random.default_rng(0).normal(size=(32, 32, 1)) * 20)
    expected = float(forward(model, diff.data.transpose(2, 0, 1)[None])[0, 0])
    assert predict_sigma(model, diff, n_patches=1).sigma_hat == pytest.approx(max(expected, 0.0), rel=1e-6)


def test_predict_sigma_identical_patches_average():
    model = _randomised_model()
    diff = DifferenceImage(np.random.default_rng(1).normal(size=(32, 32, 1)) * 20)
    one = predict_sigma(model, diff, n_patches=1).sigma_hat
    assert predict_sigma(model, diff, n_patches=7).sigma_hat == pytest.approx(one, rel=1e-6)


def test_predict_sigma_colour_averages_channels():
    model = _randomised_model()
    rng = np.random.default_rng(2)
    planes = [rng.normal(size=(32, 32)) * s for s in (5, 15, 25)]
    diff = DifferenceImage(np.stack(planes, axis=2))
    r = predict_sigma(model, diff, n_patches=1)
    singles = [predict_sigma(model, DifferenceImage(p), 1, seed=0) for p in planes]
    assert len(r.per_channel) == 3
    assert r.sigma_hat == pytest.approx(np.mean(r.per_channel))
    assert r.per_channel[0] == pytest.approx(singles[0].sigma_hat, rel=1e-6)


def test_predict_sigma_errors():
    diff = DifferenceImage(np.zeros((16, 16)))
    with pytest.raises(ValueError):
        predict_sigma(build_network(micro_config("classification")), DifferenceImage(np.zeros((32, 32))))
    with pytest.raises(ValueError):
        predict_sigma(build_network(micro_config()), diff)  # patch larger than image


def test_save_load_bit_exact(tmp_path):
    model = _randomised_model(seed=7)
    save_model(model, tmp_path / "m.dsqz")
    loaded = load_model(tmp_path / "m.dsqz")
    assert loaded.config == model.config
    assert model_to_bytes(loaded) == model_to_bytes(model)
    x = np.random.default_rng(3).normal(size=(2, 1, 32, 32)) * 10
    assert np.array_equal(forward(model, x), forward(loaded, x))


def test_truncated_file_checksum(tmp_path):
    raw = model_to_bytes(_randomised_model())
    with pytest.raises(ModelFormatError, match="checksum"):
        model_from_bytes(raw[: len(raw) // 2])


def test_unsupported_version():
    raw = bytearray(model_to_bytes(_randomised_model()))
    raw[4:8] = struct.pack("<I", 99)
    with pytest.raises(ModelFormatError, match="unsupported"):
        model_from_bytes(bytes(raw))


def test_bad_magic():
    with pytest.raises(ModelFormatError):
        model_from_bytes(b"NOPE" + bytes(20))


def test_shape_inconsistency_detected():
    raw = model_to_bytes(_randomised_model())
    body = raw[:-4]
    (n,) = struct.unpack_from("<I", body, 8)
    import json

    cfg = json.loads(body[12 : 12 + n])
    cfg["embed_channels"] = 32
    new_cfg = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    body = body[:8] + struct.pack("<I", len(new_cfg)) + new_cfg + body[12 + n:]
    with pytest.raises(ModelFormatError, match="does not match"):
        model_from_bytes(body + struct.pack("<I", zlib.crc32(body)))


def test_micro_head_variants():
    reg, cls = micro_config("regression"), micro_config("classification")
    assert not reg.embed_relu and cls.embed_relu
    assert "relu10" not in [n for n, _ in build_network(reg).net.layers]
    assert "relu10" in [n for n, _ in build_network(cls).net.layers]
    assert 0 < reg.input_scale < 1 and 0 < cls.input_scale < 1


def test_input_scale_applied():
    cfg = micro_config()
    model = build_network(cfg, seed=1)
    x = np.random.default_rng(0).normal(size=(2, 1, 32, 32)).astype(np.float32) * 30
    unscaled = build_network(replace(cfg, input_scale=1.0), seed=1)
    np.testing.assert_allclose(forward(model, x), forward(unscaled, x * np.float32(cfg.input_scale)), rtol=1e-6)
