"""
Suppressing duplicates and measuring recall
===========================================

Proposals are ranked by score and thinned with greedy non-maximum suppression.
Their quality is the average recall over tIoU thresholds 0.5 to 1.0 when each
video keeps its top AN proposals.
"""

from dpp.evaluation import EvalConfig, average_recall_at_an, emit_ar_curve, evaluate
from dpp.inference import Proposal, nms, tiou

# Three candidates: B overlaps A with tIoU 9/11 and goes, C is far away and stays.
a, b, c = Proposal("v", 0, 10, 0.9), Proposal("v", 1, 11, 0.8), Proposal("v", 20, 30, 0.7)
print("tIoU(A, B) =", round(tiou((0, 10), (1, 11)), 4))
for p in nms([a, b, c], threshold=0.7):
    print("kept", p)

###############################################################################
# A two-video recall example
# --------------------------
# One proposal matches its ground truth exactly; the other covers half of it,
# which is tIoU 0.5. The first is recalled at all 11 thresholds and the second
# only at 0.5, so AR = (11 + 1) / 22 = 6/11.

gts = {"v1": [(0.0, 10.0)], "v2": [(0.0, 10.0)]}
props = {"v1": [Proposal("v1", 0, 10, 0.9)], "v2": [Proposal("v2", 0, 5, 0.9)]}
print("AR@1 =", round(average_recall_at_an(gts, props, an=1), 4))

result = evaluate(gts, props, EvalConfig(an_list=(1, 10)))
print(emit_ar_curve(result), end="")
