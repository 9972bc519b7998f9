"""From a probability map to scored polygons.

Run: python demos/detect_and_evaluate.py
"""
import numpy as np

from textspine.evaluation import aggregate, format_table, match
from textspine.geometry import ShrinkSchedule
from textspine.labels import make_training_target
from textspine.postproc import DetectParams, detect

# Three text regions on a 320 x 320 canvas.
truths = [
    np.array([[20, 30], [150, 40], [145, 80], [18, 70]], dtype=float),
    np.array([[180, 60], [290, 60], [290, 110], [180, 110]], dtype=float),
    np.array([[60, 200], [220, 180], [240, 250], [70, 280]], dtype=float),
]

# A perfect model predicts exactly the shrunk spines; add a little noise.
prob = make_training_target(truths, ShrinkSchedule(0.4, 0.4, 1), 0, 320, 320).mask[0, 0]
prob = np.clip(prob * 0.9 + 0.05 * np.random.default_rng(0).random(prob.shape), 0, 1)

# Pretend the network ran on a 320 x 320 resize of a 640 x 480 photo.
dets = detect(prob, DetectParams(bin_thresh=0.3, d_ts=1.5), orig_w=640, orig_h=480)
for d in dets:
    print(f"score {d.score:.3f}, {len(d.polygon)} vertices, x in [{d.polygon[:, 0].min():.0f}, {d.polygon[:, 0].max():.0f}]")

scaled_truths = [t * [2.0, 1.5] for t in truths]
result = match(dets, scaled_truths, iou_thresh=0.5, image_id="demo")
print()
print(format_table([result]))
print(f"\nmicro-averaged F: {aggregate([result]).f_measure:.3f}")
