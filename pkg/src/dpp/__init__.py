"""Point-wise temporal action proposals on 1-D feature sequences.

A small numpy implementation of a pyramid network that predicts an actioness
score and log-scaled boundary offsets at every temporal position, with the
label/scale assignment, training loop, NMS decoding and AR@AN evaluation
around it.
"""
__version__ = "0.1.0"

from .assignment import (AssignConfig, GroundTruth, PointLabel, PointLabels, Status,
                         assign_labels, decode_offsets, encode_offsets, sample_balanced)
from .geometry import PyramidGeometry, level_lengths, stride, total_points
from .inference import Proposal, VideoMeta, decode_clip, nms, stitch_video, tiou
from .evaluation import EvalConfig, average_recall_at_an, evaluate, recall_at
from .model import DPPNet, ModelOutput
from .data import RunConfig, SyntheticSpec, generate_synthetic, plan_clips

__all__ = [
    "AssignConfig", "GroundTruth", "PointLabel", "PointLabels", "Status", "assign_labels",
    "decode_offsets", "encode_offsets", "sample_balanced", "PyramidGeometry", "level_lengths",
    "stride", "total_points", "Proposal", "VideoMeta", "decode_clip", "nms", "stitch_video",
    "tiou", "EvalConfig", "average_recall_at_an", "evaluate", "recall_at", "DPPNet",
    "ModelOutput", "RunConfig", "SyntheticSpec", "generate_synthetic", "plan_clips",
]
