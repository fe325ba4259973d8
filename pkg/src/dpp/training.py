"""Clip preparation, the joint loss, the SGD training loop and video-level inference."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .assignment import AssignConfig, GroundTruth, Status, assign_labels, sample_balanced
from .baseline import WindowLabeler
from .data import AnnotationSet, RunConfig, clip_ground_truths, extract_clip, plan_clips
from .errors import NumericalError
from .geometry import PyramidGeometry
from .inference import Proposal, VideoMeta, decode_clip, stitch_video
from .model import DPPNet, ForwardCache, ModelOutput
from .numeric import OptimizerState, lr_at_epoch, sgd_step, smooth_l1, softmax_ce

log = logging.getLogger(__name__)


class PointLabeler:
    """Point-wise targets: inside-GT points within the scale bound are positive."""

    anchors = 1
    kappa_scales = None

    def __init__(self, geometry: PyramidGeometry, config: AssignConfig):
        self.geometry = geometry
        self.config = config

    def __call__(self, gts: Sequence[GroundTruth]) -> tuple[np.ndarray, np.ndarray]:
        labels = assign_labels(self.geometry, gts, self.config)
        return labels.status, labels.targets


@dataclass
class Clip:
    video_id: str
    offset: int
    features: np.ndarray  # (D, clip_len)
    status: np.ndarray
    targets: np.ndarray


def prepare_clips(ann: AnnotationSet, features: Mapping[str, np.ndarray], labeler,
                  clip_len: int) -> list[Clip]:
    """Cut every video into planned clips and label their candidates.

    ``features`` maps video id to a time-major ``(T, D)`` array.
    """
    clips = []
    for video in ann:
        seq = np.ascontiguousarray(features[video.id].T)
        gts = video.ground_truths()
        for offset in plan_clips(video.num_frames, clip_len, clip_len // 2).offsets:
            status, targets = labeler(clip_ground_truths(gts, offset, clip_len))
            clips.append(Clip(video.id, offset, extract_clip(seq, offset, clip_len),
                              status, targets.astype(np.float32)))
    return clips


def joint_loss(output: ModelOutput, status: Sequence[np.ndarray], targets: Sequence[np.ndarray],
               samples: Sequence[np.ndarray]):
    """Classification + localisation loss over sampled candidates of a batch.

    Returns ``(l_act, l_loc, grad_logits, grad_offsets)`` with gradients shaped
    like the flattened outputs.
    """
    logits, offsets = output.flat_logits(), output.flat_offsets()
    rows = [np.full(len(s), b) for b, s in enumerate(samples)]
    b_idx = np.concatenate(rows) if rows else np.zeros(0, int)
    p_idx = np.concatenate(samples) if samples else np.zeros(0, int)
    labels = np.concatenate([(status[b][s] == Status.POSITIVE) for b, s in enumerate(samples)])
    l_act, g_cls = softmax_ce(logits[b_idx, p_idx], labels.astype(np.int64))

    pos = labels.astype(bool)
    pb, pp = b_idx[pos], p_idx[pos]
    tgt = np.stack([targets[b][p] for b, p in zip(pb, pp)]) if len(pb) else np.zeros((0, 2))
    l_loc, g_loc = smooth_l1(offsets[pb, pp], tgt.astype(offsets.dtype))

    grad_logits = np.zeros_like(logits)
    grad_offsets = np.zeros_like(offsets)
    np.add.at(grad_logits, (b_idx, p_idx), g_cls)
    np.add.at(grad_offsets, (pb, pp), g_loc)
    return l_act, l_loc, grad_logits, grad_offsets


@dataclass
class EpochLog:
    epoch: int
    lr: float
    l_act: float
    l_loc: float

    @property
    def loss(self) -> float:
        return self.l_act + self.l_loc

    def csv_row(self) -> str:
        return f"{self.epoch},{self.lr:.0e},{self.l_act:.6f},{self.l_loc:.6f},{self.loss:.6f}"


TRAIN_LOG_HEADER = "epoch,lr,L_act,L_loc,L"


def train(model: DPPNet, clips: Sequence[Clip], config: RunConfig,
          on_epoch: Callable[[EpochLog], None] | None = None) -> list[EpochLog]:
    """Run the multi-step SGD schedule for ``config.train_epochs`` epochs.

    Each epoch visits every clip once in a seeded random order. Within a clip
    all positives and an equal number of random negatives are used.
    """
    rng = np.random.default_rng([config.seed, 1])
    state = OptimizerState(config.train_momentum, config.train_weight_decay)
    params = model.params()
    history = []
    bs = config.train_batch_clips
    for epoch in range(1, config.train_epochs + 1):
        lr = lr_at_epoch(epoch, config.train_lr, config.train_milestones)
        order = rng.permutation(len(clips))
        sums = np.zeros(2)
        steps = 0
        for start in range(0, len(order), bs):
            batch = [clips[i] for i in order[start:start + bs]]
            x = np.stack([c.features for c in batch])
            if config.train_feature_noise:
                x = x + rng.standard_normal(x.shape).astype(x.dtype) * config.train_feature_noise
            samples = [sample_balanced(c.status, rng) for c in batch]
            cache = ForwardCache()
            out = model.forward(x, cache)
            l_act, l_loc, gq, gr = joint_loss(out, [c.status for c in batch],
                                              [c.targets for c in batch], samples)
            if not np.isfinite(l_act + l_loc):
                raise NumericalError(f"non-finite loss at epoch {epoch}, step {steps}")
            grads = model.backward(gq, gr, cache)
            sgd_step(params, grads, state, lr)
            sums += (l_act, l_loc)
            steps += 1
        entry = EpochLog(epoch, lr, *(sums / max(steps, 1)))
        log.info("epoch %d lr %.0e L_act %.4f L_loc %.4f", epoch, lr, entry.l_act, entry.l_loc)
        history.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
    return history


def predict_video(model: DPPNet, features: np.ndarray, video: VideoMeta,
                  geometry: PyramidGeometry, scale: float, nms_threshold: float,
                  kappa_scales: Sequence[float] | None = None) -> list[Proposal]:
    """Ranked, NMS-filtered proposals for one video from its ``(T, D)`` features."""
    seq = np.ascontiguousarray(features.T)
    plan = plan_clips(video.num_frames, geometry.clip_len, geometry.clip_len // 2)
    x = np.stack([extract_clip(seq, off, geometry.clip_len) for off in plan.offsets])
    out = model.forward(x)
    per_clip = [decode_clip(out, off, video, geometry, scale, b, kappa_scales)
                for b, off in enumerate(plan.offsets)]
    return stitch_video(per_clip, nms_threshold)


def predict_dataset(model: DPPNet, ann: AnnotationSet, features: Mapping[str, np.ndarray],
                    config: RunConfig, kappa_scales: Sequence[float] | None = None
                    ) -> dict[str, list[Proposal]]:
    geometry = PyramidGeometry(config.model_clip_len, config.model_levels)
    return {v.id: predict_video(model, features[v.id], VideoMeta(v.id, v.num_frames, v.fps_sampled),
                                geometry, config.assign_lambda, config.nms_threshold, kappa_scales)
            for v in ann}


def make_labeler(config: RunConfig, ratio: int | None = None):
    """Point-wise labeler, or the sliding-window one when ``ratio`` is given."""
    geometry = PyramidGeometry(config.model_clip_len, config.model_levels)
    if ratio is None:
        return PointLabeler(geometry, AssignConfig(config.assign_lambda, config.assign_eta))
    return WindowLabeler(geometry, ratio, config.baseline_kappa, config.assign_lambda)


def build_model(config: RunConfig, in_channels: int, anchors: int = 1) -> DPPNet:
    return DPPNet(in_channels, config.model_width, config.model_levels, anchors, seed=config.seed)
