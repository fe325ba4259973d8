"""
Training the point-wise network on synthetic videos
===================================================

Synthetic videos are Gaussian noise with a fixed direction added inside each
action. A small network learns to score and localise those actions within a
few epochs on a laptop CPU.
"""

import time

from dpp.data import AnnotationSet, RunConfig, generate_synthetic
from dpp.evaluation import EvalConfig, evaluate, tiou_thresholds
from dpp.pipeline import propose, synthetic_spec, train_model
from dpp.training import build_model

# A reduced setting: 60 videos, width 64, 6 epochs at a larger step size.
config = RunConfig(model_width=64, train_epochs=6, train_lr=1e-3, train_milestones=(5,),
                   synth_num_videos=60, synth_holdout=15, seed=1)
features, ann = generate_synthetic(synthetic_spec(config))
train_ann = AnnotationSet(ann.videos[:45])
test_ann = AnnotationSet(ann.videos[45:])
print(f"{len(train_ann)} training and {len(test_ann)} held-out videos, "
      f"{sum(len(v.actions) for v in ann)} actions")

ecfg = EvalConfig(tiou_thresholds(0.5, 0.05, 0.8), (5, 20, 50))
untrained = build_model(config, in_channels=config.synth_dim)
before = evaluate(test_ann.intervals(), propose(untrained, config, test_ann, features), ecfg)

###############################################################################
# Train
# -----
# Each epoch reports the classification and localisation losses.

t0 = time.perf_counter()
model, history = train_model(config, train_ann, features,
                             on_epoch=lambda e: print("  " + e.csv_row()))
print(f"trained in {time.perf_counter() - t0:.1f} s")

after = evaluate(test_ann.intervals(), propose(model, config, test_ann, features), ecfg)
for an in ecfg.an_list:
    print(f"AR@{an:<3} untrained {before.average_recall[an]:.3f}  "
          f"trained {after.average_recall[an]:.3f}")

###############################################################################
# Look at one video
# -----------------

video = test_ann.videos[0]
top = propose(model, config, AnnotationSet([video]), features)[video.id][:3]
print("ground truth:", [(round(s, 2), round(e, 2)) for s, e in video.intervals()])
for p in top:
    print(f"  proposal {p.t_start:6.2f}-{p.t_end:<6.2f} score {p.score:.3f}")
