"""Central finite-difference checks for every hand-written backward pass.

Each checker draws a small random instance, contracts the forward output with
a random cotangent ``G`` to get a scalar ``L = sum(G * f(...))`` and compares
the analytic gradient of ``L`` with central differences.  ``inject_bug``
corrupts the analytic side, as a negative control for the harness itself.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import labels, ops
from .decoder import DecoderConfig, Pyramid, decode_backward, decode_forward, init_decoder
from .lcau import (LcauParams, UpsamplerKind, lcau_backward, lcau_forward,
                   local_reassembly, local_reassembly_backward)

TOLERANCE = 1e-4
MAX_ENTRIES = 32


@dataclass(frozen=True)
class CheckResult:
    op: str
    trial: int
    error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.error <= TOLERANCE


def numerical_grad(f, x: np.ndarray, eps: float = 1e-5, index=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbed in place.

    With ``index`` (an iterable of multi-indices) only those entries are
    estimated; the rest of the result is NaN.
    """
    g = np.full(x.shape, np.nan) if index is not None else np.zeros(x.shape)
    entries = index if index is not None else np.ndindex(*x.shape)
    for idx in entries:
        orig = x[idx]
        x[idx] = orig + eps
        fp = f()
        x[idx] = orig - eps
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * eps)
    return g


def _sampled(loss, x, rng, eps=1e-5, max_entries=MAX_ENTRIES):
    """Central differences on every entry of small tensors, a random subset of large ones."""
    if x.size <= max_entries:
        return numerical_grad(loss, x, eps)
    flat = rng.choice(x.size, size=max_entries, replace=False)
    return numerical_grad(loss, x, eps, index=[np.unravel_index(i, x.shape) for i in flat])


def rel_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    mask = ~np.isnan(n)
    a, n = a[mask], n[mask]
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
    return float(np.linalg.norm(a - n) / denom)


def _corrupt(g, inject_bug):
    return g * 1.01 + 1e-3 if inject_bug else g


def _shape(rng, c_max=4):
    return (int(rng.integers(1, 3)), int(rng.integers(1, c_max + 1)),
            int(rng.integers(2, 7)), int(rng.integers(2, 7)))


def check_conv(rng, inject_bug=False) -> float:
    n, c, h, w = _shape(rng)
    co = int(rng.integers(1, 4))
    x = rng.standard_normal((n, c, h, w))
    wt = rng.standard_normal((co, c, 3, 3))
    b = rng.standard_normal(co)
    G = rng.standard_normal((n, co, h, w))
    gx, gw, gb = ops.conv3x3_backward(G, x, wt)
    loss = lambda: float(np.sum(G * ops.conv3x3_forward(x, wt, b)))
    errs = [rel_error(_corrupt(gx, inject_bug), _sampled(loss, x, rng, 1e-3)),
            rel_error(gw, _sampled(loss, wt, rng, 1e-3)),
            rel_error(gb, _sampled(loss, b, rng, 1e-3))]
    return max(errs)


def check_nearest(rng, inject_bug=False) -> float:
    x = rng.standard_normal(_shape(rng))
    r = int(rng.integers(1, 4))
    G = rng.standard_normal(ops.nearest_upsample(x, r).shape)
    loss = lambda: float(np.sum(G * ops.nearest_upsample(x, r)))
    return rel_error(_corrupt(ops.nearest_upsample_backward(G, r), inject_bug), _sampled(loss, x, rng))


def check_bilinear(rng, inject_bug=False) -> float:
    x = rng.standard_normal(_shape(rng))
    r = int(rng.integers(1, 4))
    G = rng.standard_normal(ops.bilinear_upsample(x, r).shape)
    loss = lambda: float(np.sum(G * ops.bilinear_upsample(x, r)))
    return rel_error(_corrupt(ops.bilinear_upsample_backward(G, r), inject_bug), _sampled(loss, x, rng))


def check_softmax(rng, inject_bug=False) -> float:
    x = rng.standard_normal(_shape(rng)) * 2
    G = rng.standard_normal(x.shape)
    y = ops.channel_softmax(x)
    loss = lambda: float(np.sum(G * ops.channel_softmax(x)))
    return rel_error(_corrupt(ops.channel_softmax_backward(G, y), inject_bug), _sampled(loss, x, rng))


def check_deconv(rng, inject_bug=False) -> float:
    n, c, h, w = _shape(rng)
    r = int(rng.integers(1, 4))
    co = int(rng.integers(1, 4))
    x = rng.standard_normal((n, c, h, w))
    wt = rng.standard_normal((c, co, 2 * r, 2 * r))
    b = rng.standard_normal(co)
    G = rng.standard_normal((n, co, r * h, r * w))
    gx, gw, gb = ops.deconv_upsample_backward(G, x, wt, r)
    loss = lambda: float(np.sum(G * ops.deconv_upsample(x, wt, r, b)))
    return max(rel_error(_corrupt(gx, inject_bug), _sampled(loss, x, rng)),
               rel_error(gw, _sampled(loss, wt, rng)),
               rel_error(gb, _sampled(loss, b, rng)))


def check_pixel_shuffle(rng, inject_bug=False) -> float:
    r = int(rng.integers(1, 3))
    n, c, h, w = _shape(rng, c_max=2)
    x = rng.standard_normal((n, c * r * r, h, w))
    G = rng.standard_normal((n, c, r * h, r * w))
    loss = lambda: float(np.sum(G * ops.pixel_shuffle(x, r)))
    return rel_error(_corrupt(ops.pixel_shuffle_backward(G, r), inject_bug), _sampled(loss, x, rng))


def check_sigmoid(rng, inject_bug=False) -> float:
    x = rng.standard_normal(_shape(rng)) * 3
    G = rng.standard_normal(x.shape)
    loss = lambda: float(np.sum(G * ops.sigmoid(x)))
    return rel_error(_corrupt(ops.sigmoid_backward(G, ops.sigmoid(x)), inject_bug), _sampled(loss, x, rng))


def _random_lcau(rng, c=None):
    n, c0, h, w = _shape(rng)
    c = c or c0
    r = int(rng.integers(1, 4))
    k = int(rng.choice([1, 3, 5]))
    params = LcauParams(rng.standard_normal((k * k, c, 3, 3)) * 0.5, rng.standard_normal(k * k) * 0.5, r, k)
    x = rng.standard_normal((n, c, h, w))
    return x, params


def check_reassembly(rng, inject_bug=False) -> float:
    x, params = _random_lcau(rng)
    r, k = params.r, params.k
    n, _, h, w = x.shape
    wts = ops.channel_softmax(rng.standard_normal((n, k * k, r * h, r * w)))
    G = rng.standard_normal((n, x.shape[1], r * h, r * w))
    gx, gw = local_reassembly_backward(G, x, wts, r, k)
    loss = lambda: float(np.sum(G * local_reassembly(x, wts, r, k)))
    return max(rel_error(_corrupt(gx, inject_bug), _sampled(loss, x, rng)),
               rel_error(gw, _sampled(loss, wts, rng)))


def check_lcau(rng, inject_bug=False) -> float:
    x, params = _random_lcau(rng)
    out, saved = lcau_forward(x, params)
    G = rng.standard_normal(out.shape)
    gx, gw, gb = lcau_backward(G, saved)
    w, b = params.gen_weights.copy(), params.gen_bias.copy()

    def loss():
        p = LcauParams(w, b, params.r, params.k)
        return float(np.sum(G * lcau_forward(x, p)[0]))

    return max(rel_error(_corrupt(gx, inject_bug), _sampled(loss, x, rng)),
               rel_error(gw, _sampled(loss, w, rng)),
               rel_error(gb, _sampled(loss, b, rng)))


def check_bce(rng, inject_bug=False) -> float:
    shape = (1, 1, int(rng.integers(2, 7)), int(rng.integers(2, 7)))
    pred = rng.uniform(0.05, 0.95, size=shape)
    target = labels.LabelMask((rng.random(shape) < 0.4).astype(float),
                              (rng.random(shape) < 0.1).astype(float))
    target = labels.LabelMask(target.mask * (1 - target.ignore), target.ignore)
    g = labels.bce_loss_backward(pred, target)
    loss = lambda: labels.bce_loss(pred, target).total
    return rel_error(_corrupt(g, inject_bug), _sampled(loss, pred, rng, 1e-6))


def check_decoder(rng, inject_bug=False, kind=None, per_level: int = 3) -> float:
    """Gradient of a contracted decode w.r.t. a few sampled pyramid entries per level."""
    kinds = [UpsamplerKind(kind)] if kind else list(UpsamplerKind)
    errs = []
    for kd in kinds:
        channels = int(rng.integers(1, 3))
        cfg = DecoderConfig(channels=channels, upsampler=kd, k=3)
        dec = init_decoder(cfg, seed=int(rng.integers(2 ** 31)))
        levels = {name: rng.standard_normal((1, channels, 8 // 2 ** i, 8 // 2 ** i))
                  for i, name in enumerate(("c2", "c3", "c4", "c5"))}
        pyr = Pyramid(**levels)
        prob, cache = decode_forward(pyr, dec)
        G = rng.standard_normal(prob.shape)
        grads = decode_backward(G, cache, dec)
        for name, arr in levels.items():
            picks = [tuple(int(rng.integers(s)) for s in arr.shape) for _ in range(per_level)]
            loss = lambda: float(np.sum(G * decode_forward(Pyramid(**levels), dec)[0]))
            num = numerical_grad(loss, arr, 1e-5, index=picks)
            errs.append(rel_error(_corrupt(grads[name], inject_bug), num))
    return max(errs)


CHECKS = {
    "conv": check_conv,
    "nearest": check_nearest,
    "bilinear": check_bilinear,
    "softmax": check_softmax,
    "sigmoid": check_sigmoid,
    "deconv": check_deconv,
    "pixel_shuffle": check_pixel_shuffle,
    "reassembly": check_reassembly,
    "lcau": check_lcau,
    "bce": check_bce,
    "decoder": check_decoder,
}


def run_checks(names=None, trials: int = 20, seed: int = 0, inject_bug: bool = False) -> list:
    """Run ``trials`` seeded instances of each named check; returns :class:`CheckResult` list."""
    names = list(CHECKS) if not names else list(names)
    results = []
    for name in names:
        for t in range(trials):
            rng = np.random.default_rng([seed, t, list(CHECKS).index(name)])
            start = time.perf_counter()
            err = CHECKS[name](rng, inject_bug=inject_bug)
            results.append(CheckResult(name, t, err, time.perf_counter() - start))
    return results
