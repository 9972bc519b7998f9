"""Local context-aware upsampling (LCAU) and a common front-end over baseline upsamplers.

LCAU predicts, for every high-resolution position, a normalized k x k kernel
over the low-resolution neighbourhood of its source cell:

    logits  = conv3x3(x)                 (n, k*k, h, w)
    weights = softmax_c(nearest(logits, r))  (n, k*k, r*h, r*w)
    out[n, c, y, x] = sum_j weights[n, j, y, x] * x[n, c, y//r + dy_j, x//r + dx_j]

with the window centred and out-of-range source cells read as zero.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ops
from .errors import ParameterError, ShapeError
from .grid import as_grid, atomic_write_json, load_grd1, save_grd1, uniform_init


class UpsamplerKind(str, enum.Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    DECONVOLUTION = "deconvolution"
    PIXEL_SHUFFLE = "pixel_shuffle"
    LCAU = "lcau"


@dataclass(frozen=True)
class LcauParams:
    """Weight-generation conv (k*k output channels) plus rate ``r`` and field ``k``."""

    gen_weights: np.ndarray
    gen_bias: np.ndarray
    r: int = 2
    k: int = 5

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ParameterError(f"r must be a positive integer, got {self.r!r}")
        if int(self.k) != self.k or self.k < 1 or self.k % 2 == 0:
            raise ParameterError(f"k must be an odd positive integer, got {self.k!r}")
        w = np.asarray(self.gen_weights, dtype=np.float64)
        b = np.asarray(self.gen_bias, dtype=np.float64).reshape(-1)
        if w.ndim != 4 or w.shape[0] != self.k * self.k or w.shape[2:] != (3, 3):
            raise ShapeError(f"gen_weights must be ({self.k * self.k}, C, 3, 3), got {w.shape}")
        if b.shape[0] != self.k * self.k:
            raise ShapeError(f"gen_bias must have {self.k * self.k} entries, got {b.shape[0]}")
        object.__setattr__(self, "gen_weights", w)
        object.__setattr__(self, "gen_bias", b)

    @property
    def channels(self) -> int:
        return self.gen_weights.shape[1]

    @classmethod
    def zeros(cls, channels: int, r: int = 2, k: int = 5) -> "LcauParams":
        return cls(np.zeros((k * k, channels, 3, 3)), np.zeros(k * k), r, k)

    @classmethod
    def init(cls, channels: int, r: int = 2, k: int = 5, seed: int = 0) -> "LcauParams":
        rng = np.random.default_rng(seed)
        w = uniform_init((k * k, channels, 3, 3), channels * 9, rng)
        return cls(w, np.zeros(k * k), r, k)

    def save(self, path) -> None:
        """Write ``<path>.grd`` (weights), ``<path>.bias.grd`` and ``<path>.json``."""
        path = Path(path)
        save_grd1(path.with_suffix(".grd"), self.gen_weights)
        save_grd1(path.with_suffix(".bias.grd"), self.gen_bias.reshape(1, -1, 1, 1))
        atomic_write_json(path.with_suffix(".json"), {"r": self.r, "k": self.k, "C": self.channels})

    @classmethod
    def load(cls, path) -> "LcauParams":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        w = load_grd1(path.with_suffix(".grd"))
        b = load_grd1(path.with_suffix(".bias.grd")).reshape(-1)
        params = cls(w, b, int(meta["r"]), int(meta["k"]))
        if params.channels != int(meta["C"]):
            raise ShapeError(f"descriptor says C={meta['C']}, weights have {params.channels}")
        return params


@dataclass(frozen=True)
class LcauContext:
    """Everything ``lcau_backward`` needs from the forward pass."""

    input: np.ndarray
    params: LcauParams
    weights: np.ndarray


def window_offsets(k: int):
    """(dy, dx) for each kernel channel, row-major over the centred window."""
    p = k // 2
    return [(dy, dx) for dy in range(-p, p + 1) for dx in range(-p, p + 1)]


def lcau_weights(x, params: LcauParams) -> np.ndarray:
    x = as_grid(x)
    if x.shape[1] != params.channels:
        raise ShapeError(f"input has {x.shape[1]} channels, LCAU params expect {params.channels}")
    logits = ops.conv3x3_forward(x, params.gen_weights, params.gen_bias)
    return ops.channel_softmax(ops.nearest_upsample(logits, params.r))


def _check_reassembly(x, weights, r, k):
    x = as_grid(x)
    weights = as_grid(weights, "weights")
    n, _, h, w = x.shape
    if weights.shape != (n, k * k, r * h, r * w):
        raise ShapeError(f"weights shape {weights.shape} inconsistent with input {x.shape}, "
                         f"r={r}, k={k}; expected {(n, k * k, r * h, r * w)}")
    return x, weights


def local_reassembly(x, weights, r: int, k: int) -> np.ndarray:
    x, weights = _check_reassembly(x, weights, r, k)
    n, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((n, c, r * h, r * w))
    for j, (dy, dx) in enumerate(window_offsets(k)):
        src = xp[:, :, p + dy:p + dy + h, p + dx:p + dx + w]
        out += weights[:, j:j + 1] * ops.nearest_upsample(src, r)
    return out


def local_reassembly_backward(grad_out, x, weights, r: int, k: int):
    """Return ``(grad_input, grad_weights)``."""
    x, weights = _check_reassembly(x, weights, r, k)
    g = as_grid(grad_out, "grad_out")
    n, c, h, w = x.shape
    if g.shape != (n, c, r * h, r * w):
        raise ShapeError(f"grad_out shape {g.shape} does not match {(n, c, r * h, r * w)}")
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    gxp = np.zeros_like(xp)
    gw = np.empty_like(weights)
    for j, (dy, dx) in enumerate(window_offsets(k)):
        src = xp[:, :, p + dy:p + dy + h, p + dx:p + dx + w]
        gw[:, j] = (g * ops.nearest_upsample(src, r)).sum(axis=1)
        gxp[:, :, p + dy:p + dy + h, p + dx:p + dx + w] += ops.nearest_upsample_backward(
            g * weights[:, j:j + 1], r)
    return gxp[:, :, p:p + h, p:p + w].copy(), gw


def lcau_forward(x, params: LcauParams):
    """Return ``(output, context)``; output is (n, C, r*h, r*w)."""
    x = as_grid(x)
    weights = lcau_weights(x, params)
    out = local_reassembly(x, weights, params.r, params.k)
    return out, LcauContext(x, params, weights)


def lcau_backward(grad_out, saved: LcauContext):
    """Return ``(grad_input, grad_gen_weights, grad_gen_bias)`` through both branches."""
    x, params, weights = saved.input, saved.params, saved.weights
    gx, gweights = local_reassembly_backward(grad_out, x, weights, params.r, params.k)
    glogits_up = ops.channel_softmax_backward(gweights, weights)
    glogits = ops.nearest_upsample_backward(glogits_up, params.r)
    gx_gen, ggw, ggb = ops.conv3x3_backward(glogits, x, params.gen_weights)
    return gx + gx_gen, ggw, ggb


# ---------------------------------------------------------------------------
# Baseline parameter bundles and the uniform dispatcher
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeconvParams:
    """Transposed-conv kernel (C_in, C_out, 2r, 2r) and bias."""

    weights: np.ndarray
    bias: np.ndarray
    r: int = 2

    @classmethod
    def init(cls, channels: int, r: int = 2, seed: int = 0) -> "DeconvParams":
        rng = np.random.default_rng(seed)
        w = uniform_init((channels, channels, 2 * r, 2 * r), channels * 4 * r * r, rng)
        return cls(w, np.zeros(channels), r)


@dataclass(frozen=True)
class ShuffleParams:
    """3x3 conv expanding C to C*r*r channels ahead of a pixel shuffle."""

    weights: np.ndarray
    bias: np.ndarray
    r: int = 2

    @classmethod
    def init(cls, channels: int, r: int = 2, seed: int = 0) -> "ShuffleParams":
        rng = np.random.default_rng(seed)
        w = uniform_init((channels * r * r, channels, 3, 3), channels * 9, rng)
        return cls(w, np.zeros(channels * r * r), r)


def init_upsampler_params(kind: UpsamplerKind, channels: int, r: int = 2, k: int = 5, seed: int = 0):
    """Seeded parameters for ``kind`` (``None`` for parameter-free kinds)."""
    kind = UpsamplerKind(kind)
    if kind is UpsamplerKind.LCAU:
        return LcauParams.init(channels, r, k, seed)
    if kind is UpsamplerKind.DECONVOLUTION:
        return DeconvParams.init(channels, r, seed)
    if kind is UpsamplerKind.PIXEL_SHUFFLE:
        return ShuffleParams.init(channels, r, seed)
    return None


def _rate(r, params):
    if params is not None and hasattr(params, "r"):
        if r is not None and r != params.r:
            raise ParameterError(f"rate {r} disagrees with params.r={params.r}")
        return params.r
    if r is None:
        raise ParameterError("upsample rate r is required for parameter-free kinds")
    return r


def upsample_forward(kind, x, r=None, params=None):
    """Dispatch to the upsampler for ``kind``; return ``(output, context)``."""
    kind = UpsamplerKind(kind)
    x = as_grid(x)
    if kind in (UpsamplerKind.LCAU, UpsamplerKind.DECONVOLUTION) and params is None:
        raise ParameterError(f"{kind.value} upsampling requires parameters")
    r = _rate(r, params)
    if kind is UpsamplerKind.NEAREST:
        return ops.nearest_upsample(x, r), (x, r)
    if kind is UpsamplerKind.BILINEAR:
        return ops.bilinear_upsample(x, r), (x, r)
    if kind is UpsamplerKind.DECONVOLUTION:
        return ops.deconv_upsample(x, params.weights, r, params.bias), (x, r)
    if kind is UpsamplerKind.PIXEL_SHUFFLE:
        if params is None:
            return ops.pixel_shuffle(x, r), (x, r)
        expanded = ops.conv3x3_forward(x, params.weights, params.bias)
        return ops.pixel_shuffle(expanded, r), (x, r)
    return lcau_forward(x, params)


def upsample(kind, x, r=None, params=None) -> np.ndarray:
    return upsample_forward(kind, x, r, params)[0]


def upsample_backward(kind, grad_out, ctx, params=None):
    """Return ``(grad_input, param_grads)``; ``param_grads`` mirrors the params' fields."""
    kind = UpsamplerKind(kind)
    if kind is UpsamplerKind.LCAU:
        gx, gw, gb = lcau_backward(grad_out, ctx)
        return gx, {"gen_weights": gw, "gen_bias": gb}
    x, r = ctx
    if kind is UpsamplerKind.NEAREST:
        return ops.nearest_upsample_backward(grad_out, r), {}
    if kind is UpsamplerKind.BILINEAR:
        return ops.bilinear_upsample_backward(grad_out, r), {}
    if kind is UpsamplerKind.DECONVOLUTION:
        gx, gw, gb = ops.deconv_upsample_backward(grad_out, x, params.weights, r)
        return gx, {"weights": gw, "bias": gb}
    gexp = ops.pixel_shuffle_backward(grad_out, r)
    if params is None:
        return gexp, {}
    gx, gw, gb = ops.conv3x3_backward(gexp, x, params.weights)
    return gx, {"weights": gw, "bias": gb}
