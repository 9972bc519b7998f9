"""Text-spine labels that grow over training.

Run: python demos/dynamic_labels.py
"""
import numpy as np

from textspine.geometry import ShrinkSchedule, area, schedule_ratio, shrink_for_epoch, shrink_offset
from textspine.labels import bce_loss, bce_ohem_loss, focal_loss, make_training_target

# A curved word annotated with 14 points, the CTW1500 convention.
t = np.linspace(0, np.pi, 7)
top = np.c_[60 + 50 * np.cos(t[::-1] + np.pi), 70 - 30 * np.sin(t)]
bottom = np.c_[60 + 30 * np.cos(t + np.pi), 70 - 12 * np.sin(t[::-1])][::-1]
word = np.vstack([top, bottom[::-1]])
print(f"annotation area {area(word):.1f} px^2")

schedule = ShrinkSchedule(r_a=0.4, r_b=0.6, max_epoch=1200)
for epoch in (0, 300, 600, 900, 1200):
    r = schedule_ratio(schedule, epoch)
    spine = shrink_for_epoch(word, schedule, epoch)
    target = make_training_target([word], schedule, epoch, 96, 128)
    print(f"epoch {epoch:>4}: r={r:.3f}  D={shrink_offset(word, r):.2f}  "
          f"spine pieces={len(spine)}  positive pixels={target.n_pos}")

# Score a noisy prediction against the final labels with the three losses.
target = make_training_target([word], schedule, 1200, 96, 128)
rng = np.random.default_rng(0)
pred = np.clip(0.7 * target.mask + 0.15 + 0.1 * rng.standard_normal(target.mask.shape), 0, 1)
for name, fn in (("bce", bce_loss), ("bce+ohem", bce_ohem_loss), ("focal", focal_loss)):
    rep = fn(pred, target)
    print(f"{name:>8}: {rep.total:.4f}  (positives {rep.n_pos}, negatives used {rep.n_neg_selected})")
