"""Pyramid decoder: C2-C5 features -> full-resolution text probability map.

c3, c4 and c5 are brought to the c2 grid by chains of x2 upsampling stages,
concatenated (4 * channels), squeezed back to ``channels`` by a 3x3 conv,
upsampled x4 to image resolution and projected to one sigmoid channel.
Parameters are randomly initialized; the module exists to exercise shape,
range and gradient contracts, not to produce trained predictions.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import ops
from .errors import FormatError, ParameterError, ShapeError
from .grid import as_grid, atomic_write_json, load_grd1, save_grd1, uniform_init
from .lcau import (DeconvParams, LcauParams, ShuffleParams, UpsamplerKind,
                   init_upsampler_params, upsample_backward, upsample_forward)

LEVELS = ("c2", "c3", "c4", "c5")
STRIDES = {"c2": 4, "c3": 8, "c4": 16, "c5": 32}
# c3 needs one x2 stage to reach c2, c4 two, c5 three
_STAGES = {"c3": 1, "c4": 2, "c5": 3}


class LcauPlacement(str, enum.Enum):
    FPN_ONLY = "fpn"
    ALL = "all"


@dataclass(frozen=True)
class Pyramid:
    c2: np.ndarray
    c3: np.ndarray
    c4: np.ndarray
    c5: np.ndarray

    def __post_init__(self):
        for name in LEVELS:
            object.__setattr__(self, name, as_grid(getattr(self, name), name))
        base = self.c2.shape
        for i, name in enumerate(LEVELS[1:], 1):
            s = getattr(self, name).shape
            want = (base[0], base[1], base[2] / 2 ** i, base[3] / 2 ** i)
            if s != want:
                raise ShapeError(f"{name} has shape {s}, expected {want} relative to c2 {base}")

    @property
    def channels(self) -> int:
        return self.c2.shape[1]

    @property
    def image_size(self):
        return self.c2.shape[2] * 4, self.c2.shape[3] * 4

    def levels(self) -> dict:
        return {name: getattr(self, name) for name in LEVELS}


@dataclass(frozen=True)
class DecoderConfig:
    channels: int = 64
    upsampler: UpsamplerKind = UpsamplerKind.LCAU
    lcau_placement: LcauPlacement = LcauPlacement.ALL
    k: int = 5

    def __post_init__(self):
        if self.channels <= 0:
            raise ParameterError(f"channels must be positive, got {self.channels}")
        object.__setattr__(self, "upsampler", UpsamplerKind(self.upsampler))
        object.__setattr__(self, "lcau_placement", LcauPlacement(self.lcau_placement))

    def final_kind(self) -> UpsamplerKind:
        if self.upsampler is UpsamplerKind.LCAU and self.lcau_placement is LcauPlacement.FPN_ONLY:
            return UpsamplerKind.NEAREST
        return self.upsampler


@dataclass(frozen=True)
class ConvParams:
    weights: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class Decoder:
    """Immutable decoder: configuration plus every stage's parameters."""

    config: DecoderConfig
    stages: dict = field(default_factory=dict)
    agg: ConvParams = None
    head: ConvParams = None

    def stage_names(self):
        return [f"{lvl}_up{i}" for lvl, n in _STAGES.items() for i in range(n)] + ["final"]

    def stage_kind(self, name: str) -> UpsamplerKind:
        return self.config.final_kind() if name == "final" else self.config.upsampler

    def save(self, directory) -> None:
        """Write one GRD1 file per array plus ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        cfg = self.config
        manifest = {
            "channels": cfg.channels,
            "upsampler": cfg.upsampler.value,
            "lcau_placement": cfg.lcau_placement.value,
            "k": cfg.k,
            "stages": {},
        }

        def dump(prefix, params):
            entry = {"type": type(params).__name__, "arrays": {}}
            for f in fields(params):
                value = getattr(params, f.name)
                if isinstance(value, np.ndarray):
                    fname = f"{prefix}.{f.name}.grd"
                    arr = value if value.ndim == 4 else value.reshape(1, -1, 1, 1)
                    save_grd1(directory / fname, arr)
                    entry["arrays"][f.name] = {"file": fname, "shape": list(value.shape)}
                else:
                    entry[f.name] = value
            return entry

        for name, params in self.stages.items():
            if params is not None:
                manifest["stages"][name] = dump(name, params)
        manifest["agg"] = dump("agg", self.agg)
        manifest["head"] = dump("head", self.head)
        atomic_write_json(directory / "manifest.json", manifest)

    @classmethod
    def load(cls, directory) -> "Decoder":
        directory = Path(directory)
        try:
            manifest = json.loads((directory / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read decoder manifest in {directory}: {exc}") from exc
        types = {t.__name__: t for t in (LcauParams, DeconvParams, ShuffleParams, ConvParams)}

        def build(entry):
            kwargs = {k: v for k, v in entry.items() if k not in ("type", "arrays")}
            for name, spec in entry["arrays"].items():
                kwargs[name] = load_grd1(directory / spec["file"]).reshape(spec["shape"])
            return types[entry["type"]](**kwargs)

        cfg = DecoderConfig(manifest["channels"], manifest["upsampler"],
                            manifest["lcau_placement"], manifest["k"])
        decoder = cls(cfg, {}, build(manifest["agg"]), build(manifest["head"]))
        for name in decoder.stage_names():
            entry = manifest["stages"].get(name)
            decoder.stages[name] = build(entry) if entry else None
        return decoder


def init_decoder(config: DecoderConfig, seed: int = 0, head_bias: float = 0.0) -> Decoder:
    rng = np.random.default_rng(seed)
    c = config.channels
    decoder = Decoder(
        config,
        {},
        ConvParams(uniform_init((c, 4 * c, 3, 3), 4 * c * 9, rng), np.zeros(c)),
        ConvParams(uniform_init((1, c, 3, 3), c * 9, rng), np.full(1, float(head_bias))),
    )
    for name in decoder.stage_names():
        r = 4 if name == "final" else 2
        stage_seed = int(rng.integers(2 ** 31))
        decoder.stages[name] = init_upsampler_params(decoder.stage_kind(name), c, r, config.k, stage_seed)
    return decoder


def _stage_rate(name: str) -> int:
    return 4 if name == "final" else 2


def decode_forward(pyramid: Pyramid, decoder: Decoder):
    """Return ``(probability map (n, 1, H, W), cache)``."""
    if pyramid.channels != decoder.config.channels:
        raise ShapeError(f"pyramid has {pyramid.channels} channels, decoder expects "
                         f"{decoder.config.channels}")
    cache = {"stages": {}}
    aligned = [pyramid.c2]
    for lvl, count in _STAGES.items():
        x = getattr(pyramid, lvl)
        for i in range(count):
            name = f"{lvl}_up{i}"
            x, ctx = upsample_forward(decoder.stage_kind(name), x, _stage_rate(name), decoder.stages[name])
            cache["stages"][name] = ctx
        aligned.append(x)
    cat = np.concatenate(aligned, axis=1)
    agg = ops.conv3x3_forward(cat, decoder.agg.weights, decoder.agg.bias)
    up, ctx = upsample_forward(decoder.stage_kind("final"), agg, 4, decoder.stages["final"])
    cache["stages"]["final"] = ctx
    logits = ops.conv3x3_forward(up, decoder.head.weights, decoder.head.bias)
    prob = ops.sigmoid(logits)
    cache.update(cat=cat, agg=agg, up=up, prob=prob)
    return prob, cache


def decode(pyramid: Pyramid, decoder: Decoder) -> np.ndarray:
    return decode_forward(pyramid, decoder)[0]


def decode_backward(grad_out, cache, decoder: Decoder) -> dict:
    """Cotangents of the pyramid levels, keyed ``c2`` .. ``c5``."""
    g = ops.sigmoid_backward(as_grid(grad_out, "grad_out"), cache["prob"])
    g, _, _ = ops.conv3x3_backward(g, cache["up"], decoder.head.weights)
    g, _ = upsample_backward(decoder.stage_kind("final"), g, cache["stages"]["final"],
                             decoder.stages["final"])
    g, _, _ = ops.conv3x3_backward(g, cache["cat"], decoder.agg.weights)
    c = decoder.config.channels
    grads = {"c2": g[:, :c].copy()}
    for j, (lvl, count) in enumerate(_STAGES.items(), 1):
        gl = g[:, j * c:(j + 1) * c]
        for i in reversed(range(count)):
            name = f"{lvl}_up{i}"
            gl, _ = upsample_backward(decoder.stage_kind(name), gl, cache["stages"][name],
                                      decoder.stages[name])
        grads[lvl] = gl
    return grads


def synth_pyramid(image, seed: int = 0, channels: int = 64) -> Pyramid:
    """Deterministic stand-in backbone: seeded 3x3 convs, strided, with tanh."""
    image = as_grid(image, "image")
    H, W = image.shape[2:]
    if H % 32 or W % 32:
        raise ShapeError(f"image extents {(H, W)} must be divisible by 32")
    rng = np.random.default_rng(seed)
    x = image
    levels = {}
    for name, stride in (("c2", 4), ("c3", 2), ("c4", 2), ("c5", 2)):
        cin = x.shape[1]
        w = uniform_init((channels, cin, 3, 3), cin * 9, rng)
        b = rng.uniform(-0.1, 0.1, size=channels)
        x = np.tanh(ops.conv3x3_forward(x, w, b)[:, :, ::stride, ::stride])
        levels[name] = x
    return Pyramid(**levels)
