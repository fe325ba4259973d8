"""
Pyramid points and how they are labelled
========================================

Every point of the temporal pyramid looks at a fixed frame of the clip and is
responsible for actions whose boundaries sit within a factor of about e of its
stride. This script walks through the geometry and the labelling of one clip.
"""

import numpy as np

from dpp.assignment import AssignConfig, GroundTruth, Status, assign_labels, encode_offsets, \
    sample_balanced
from dpp.geometry import PyramidGeometry

# A 256-frame clip with six levels: strides 4, 8, ..., 128.
geom = PyramidGeometry(clip_len=256, num_levels=6)
print("points per level:", geom.lengths, "total:", geom.total_points)

# Point 7 of the finest level looks at frame 30.
print("frame of (level 1, point 7):", geom.point_to_time(1, 7))

# Offsets are logs of boundary distance over stride, times lambda = 3.
for gt in (GroundTruth(26, 34), GroundTruth(22, 38), GroundTruth(14, 46)):
    s1, s2 = encode_offsets(1, 7, gt)
    print(f"gt {gt.t_start:>4}-{gt.t_end:<4} -> offsets ({s1:.4f}, {s2:.4f})")

###############################################################################
# Assign one clip with two actions
# --------------------------------
# Points inside an action become positive when both offsets stay within
# eta = 3, ignored otherwise. Everything else is negative.

gts = [GroundTruth(22, 38), GroundTruth(100, 220)]
labels = assign_labels(geom, gts, AssignConfig(scale=3.0, bound=3.0))
for level in geom.levels:
    row = labels.status[geom.point_levels == level]
    marks = "".join({Status.POSITIVE: "+", Status.NEGATIVE: ".", Status.IGNORED: "x"}[Status(v)]
                    for v in row)
    print(f"level {level} (stride {2 ** (level + 1):>3}): {marks}")

# The short action is caught by the fine levels and the long one by the coarse
# levels: each level only learns offsets close to its own stride.

###############################################################################
# Balanced sampling
# -----------------
# Training uses every positive plus as many random negatives.

rng = np.random.default_rng(0)
chosen = sample_balanced(labels, rng)
print("positives:", len(labels.positives), "sampled:", len(chosen))
