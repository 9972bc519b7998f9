"""Local context-aware upsampling on a toy feature map.

Run: python demos/lcau_upsampling.py
"""
import numpy as np

from textspine import ops
from textspine.lcau import LcauParams, UpsamplerKind, init_upsampler_params, lcau_forward, lcau_weights, upsample

rng = np.random.default_rng(0)
x = rng.standard_normal((1, 4, 6, 6))

# With zero parameters every predicted kernel is uniform, so LCAU is a
# k x k box filter placed on each r x r output block.
w = lcau_weights(x, LcauParams.zeros(4, r=2, k=5))
print("kernel shape per location:", w.shape[1], "weights, all equal to", w[0, 0, 0, 0])

# A strong centre bias drives the kernels to one-hot, and the operator
# collapses to nearest upsampling.
b = np.zeros(25)
b[12] = 40.0
sharp, _ = lcau_forward(x, LcauParams(np.zeros((25, 4, 3, 3)), b, 2, 5))
print("max |LCAU - nearest| with saturated centre:", np.abs(sharp - ops.nearest_upsample(x, 2)).max())

# Randomly initialized weights give content-dependent kernels; each output
# stays inside the range of its source window.
out, _ = lcau_forward(x, LcauParams.init(4, r=2, k=5, seed=1))
print("output shape:", out.shape)

# Every baseline goes through the same dispatcher and agrees on shape.
for kind in UpsamplerKind:
    params = init_upsampler_params(kind, 4, r=2, k=5, seed=2)
    y = upsample(kind, x, None if params is not None else 2, params)
    print(f"{kind.value:>14}: {y.shape}  mean {y.mean():+.4f}  std {y.std():.4f}")
