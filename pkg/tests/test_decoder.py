import dataclasses

import numpy as np
import pytest

from textspine.decoder import (DecoderConfig, LcauPlacement, Pyramid, decode, init_decoder,
                               synth_pyramid, Decoder)
from textspine.errors import FormatError, ParameterError, ShapeError
from textspine.gradcheck import check_decoder
from textspine.lcau import LcauParams, UpsamplerKind
from textspine.ops import nearest_upsample, sigmoid

from oracles import box_filtered_nearest, conv3x3_loops


def random_pyramid(seed, channels=4, side=8):
    rng = np.random.default_rng(seed)
    return Pyramid(*[rng.standard_normal((1, channels, side >> i, side >> i)) for i in range(4)])


def test_pyramid_from_64px_image():
    pyr = synth_pyramid(np.zeros((1, 3, 64, 64)), seed=0, channels=8)
    assert [v.shape[2:] for v in pyr.levels().values()] == [(16, 16), (8, 8), (4, 4), (2, 2)]
    assert pyr.image_size == (64, 64)


def test_synth_determinism_and_seed_sensitivity():
    img = np.random.default_rng(0).uniform(0, 1, (1, 3, 64, 64))
    a, b = synth_pyramid(img, 7, 8), synth_pyramid(img, 7, 8)
    c = synth_pyramid(img, 8, 8)
    for name in ("c2", "c3", "c4", "c5"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
        assert not np.array_equal(getattr(a, name), getattr(c, name))


@pytest.mark.parametrize("shape", [(1, 3, 48, 64), (1, 3, 64, 40)])
def test_synth_rejects_indivisible(shape):
    with pytest.raises(ShapeError):
        synth_pyramid(np.zeros(shape))


def test_pyramid_rejects_bad_halving():
    with pytest.raises(ShapeError):
        Pyramid(np.zeros((1, 2, 8, 8)), np.zeros((1, 2, 4, 4)), np.zeros((1, 2, 3, 3)), np.zeros((1, 2, 1, 1)))


@pytest.mark.parametrize("kind", list(UpsamplerKind))
def test_shape_and_range_per_kind(kind):
    dec = init_decoder(DecoderConfig(channels=4, upsampler=kind, k=3), seed=1)
    prob = decode(random_pyramid(0), dec)
    assert prob.shape == (1, 1, 32, 32)
    assert np.all((prob > 0) & (prob < 1))


def test_default_config_on_64px_image():
    pyr = synth_pyramid(np.random.default_rng(1).uniform(0, 1, (1, 3, 64, 64)), seed=3)
    prob = decode(pyr, init_decoder(DecoderConfig(), seed=3))
    assert prob.shape == (1, 1, 64, 64)
    assert np.all((prob > 0) & (prob < 1))


@pytest.mark.parametrize("kind", list(UpsamplerKind))
def test_zero_pyramid_gives_sigmoid_bias(kind):
    # parameter-bearing stages have zero bias at init, so zeros flow through untouched
    dec = init_decoder(DecoderConfig(channels=3, upsampler=kind, k=3), seed=2, head_bias=-0.7)
    pyr = Pyramid(*[np.zeros((1, 3, 8 >> i, 8 >> i)) for i in range(4)])
    np.testing.assert_array_equal(decode(pyr, dec), np.full((1, 1, 32, 32), sigmoid(-0.7)))


def zero_lcau_decoder(placement, k=3):
    dec = init_decoder(DecoderConfig(channels=2, upsampler="lcau", lcau_placement=placement, k=k), seed=4)
    stages = {name: (None if p is None else LcauParams.zeros(2, p.r, k)) for name, p in dec.stages.items()}
    return dataclasses.replace(dec, stages=stages)


@pytest.mark.parametrize("placement", list(LcauPlacement))
def test_zero_lcau_decode_is_box_filtered_nearest(placement):
    k = 3
    dec = zero_lcau_decoder(placement, k)
    pyr = random_pyramid(5, channels=2)
    aligned = [pyr.c2]
    for lvl, n in (("c3", 1), ("c4", 2), ("c5", 3)):
        x = getattr(pyr, lvl)
        for _ in range(n):
            x = box_filtered_nearest(x, 2, k)
        aligned.append(x)
    agg = conv3x3_loops(np.concatenate(aligned, axis=1), dec.agg.weights, dec.agg.bias)
    up = box_filtered_nearest(agg, 4, k) if placement is LcauPlacement.ALL else nearest_upsample(agg, 4)
    expected = sigmoid(conv3x3_loops(up, dec.head.weights, dec.head.bias))
    np.testing.assert_allclose(decode(pyr, dec), expected, rtol=0, atol=1e-12)


def test_final_kind_by_placement():
    assert DecoderConfig(upsampler="lcau", lcau_placement="fpn").final_kind() is UpsamplerKind.NEAREST
    assert DecoderConfig(upsampler="lcau", lcau_placement="all").final_kind() is UpsamplerKind.LCAU
    assert DecoderConfig(upsampler="bilinear", lcau_placement="fpn").final_kind() is UpsamplerKind.BILINEAR


def test_config_validation():
    with pytest.raises(ParameterError):
        DecoderConfig(channels=0)
    with pytest.raises(ValueError):
        DecoderConfig(upsampler="bicubic")


def test_channel_mismatch():
    dec = init_decoder(DecoderConfig(channels=4, k=3), seed=0)
    with pytest.raises(ShapeError):
        decode(random_pyramid(0, channels=3), dec)


def test_init_determinism():
    cfg = DecoderConfig(channels=3, k=3)
    pyr = random_pyramid(6, channels=3)
    assert np.array_equal(decode(pyr, init_decoder(cfg, seed=9)), decode(pyr, init_decoder(cfg, seed=9)))
    assert not np.array_equal(decode(pyr, init_decoder(cfg, seed=9)), decode(pyr, init_decoder(cfg, seed=10)))


@pytest.mark.parametrize("kind", list(UpsamplerKind))
def test_save_load_roundtrip(tmp_path, kind):
    dec = init_decoder(DecoderConfig(channels=3, upsampler=kind, k=3), seed=7, head_bias=0.3)
    dec.save(tmp_path / "dec")
    back = Decoder.load(tmp_path / "dec")
    assert back.config == dec.config
    pyr = random_pyramid(1, channels=3)
    assert np.array_equal(decode(pyr, back), decode(pyr, dec))


def test_load_missing_manifest(tmp_path):
    with pytest.raises(FormatError):
        Decoder.load(tmp_path)


@pytest.mark.parametrize("kind", list(UpsamplerKind))
def test_end_to_end_gradient(kind):
    for seed in range(3):
        assert check_decoder(np.random.default_rng(seed), kind=kind) < 1e-4
