"""Decode network outputs into scored proposals and filter them with NMS."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .assignment import decode_array
from .errors import FormatError
from .geometry import PyramidGeometry
from .model import ModelOutput
from .numeric import softmax

DEFAULT_FPS = 8.0
NMS_THRESHOLD = 0.7
PROPOSAL_HEADER = ("video_id", "t_start", "t_end", "score")


@dataclass(frozen=True)
class Proposal:
    video_id: str
    t_start: float
    t_end: float
    score: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    num_frames: int
    fps: float = DEFAULT_FPS

    @property
    def duration(self) -> float:
        return self.num_frames / self.fps


def tiou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Temporal intersection over union of two ``(start, end)`` intervals."""
    if a[0] >= a[1] or b[0] >= b[1]:
        raise ValueError(f"degenerate interval in tiou: {a}, {b}")
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    return inter / (max(a[1], b[1]) - min(a[0], b[0]))


def tiou_matrix(starts_a, ends_a, starts_b, ends_b) -> np.ndarray:
    """Pairwise tIoU, ``(len(a), len(b))``."""
    sa, ea = np.asarray(starts_a, float)[:, None], np.asarray(ends_a, float)[:, None]
    sb, eb = np.asarray(starts_b, float)[None, :], np.asarray(ends_b, float)[None, :]
    inter = np.clip(np.minimum(ea, eb) - np.maximum(sa, sb), 0, None)
    union = np.maximum(ea, eb) - np.minimum(sa, sb)
    return np.where(inter > 0, inter / union, 0.0)


def candidate_frames(geometry: PyramidGeometry, kappa_scales: Sequence[float] | None = None):
    """Per-candidate (center, normaliser) arrays in flattened candidate order.

    Without ``kappa_scales`` each point is one candidate normalised by its
    stride. With them, point ``i`` expands into ``len(kappa_scales)``
    windows normalised by half their length.
    """
    centers, norms = geometry.point_times, geometry.point_strides
    if kappa_scales is None:
        return centers, norms
    scales = np.asarray(kappa_scales, dtype=np.float64)
    return (np.repeat(centers, len(scales)),
            (norms[:, None] * scales[None, :] / 2).reshape(-1))


def decode_clip(output: ModelOutput, clip_offset: float, video: VideoMeta,
                geometry: PyramidGeometry, scale: float = 3.0, batch_index: int = 0,
                kappa_scales: Sequence[float] | None = None) -> list[Proposal]:
    """Proposals in seconds for one clip of ``output``.

    Points whose mapped frame lies beyond the end of the video (clip padding)
    are dropped, and boundaries are clamped to the video extent.
    """
    logits = output.flat_logits()[batch_index].astype(np.float64)
    offsets = output.flat_offsets()[batch_index].astype(np.float64)
    centers, norms = candidate_frames(geometry, kappa_scales)
    scores = softmax(logits)[:, 1]
    starts, ends = decode_array(centers, norms, offsets, scale)
    starts = np.clip((starts + clip_offset) / video.fps, 0.0, video.duration)
    ends = np.clip((ends + clip_offset) / video.fps, 0.0, video.duration)
    keep = ((centers + clip_offset) < video.num_frames) & (ends > starts)
    return [Proposal(video.video_id, float(s), float(e), float(q))
            for s, e, q in zip(starts[keep], ends[keep], scores[keep])]


def _order(proposals: Sequence[Proposal]) -> list[int]:
    return sorted(range(len(proposals)),
                  key=lambda i: (-proposals[i].score, proposals[i].t_start, -proposals[i].duration))


def sort_proposals(proposals: Iterable[Proposal]) -> list[Proposal]:
    """Score descending, ties by earlier start then longer duration."""
    proposals = list(proposals)
    return [proposals[i] for i in _order(proposals)]


def nms(proposals: Sequence[Proposal], threshold: float = NMS_THRESHOLD) -> list[Proposal]:
    """Greedy non-maximum suppression.

    A proposal is suppressed when its tIoU with an already kept one is strictly
    greater than ``threshold``. Output is in keep order (score descending).
    """
    ranked = sort_proposals(proposals)
    if not ranked:
        return []
    starts = np.array([p.t_start for p in ranked])
    ends = np.array([p.t_end for p in ranked])
    alive = np.ones(len(ranked), dtype=bool)
    keep = []
    for i in range(len(ranked)):
        if not alive[i]:
            continue
        keep.append(i)
        rest = np.flatnonzero(alive[i + 1:]) + i + 1
        if not len(rest):
            break
        inter = np.clip(np.minimum(ends[i], ends[rest]) - np.maximum(starts[i], starts[rest]), 0, None)
        union = np.maximum(ends[i], ends[rest]) - np.minimum(starts[i], starts[rest])
        overlap = np.where(inter > 0, inter / union, 0.0)
        alive[rest[overlap > threshold]] = False
    return [ranked[i] for i in keep]


def stitch_video(clip_proposals: Iterable[Sequence[Proposal]],
                 threshold: float = NMS_THRESHOLD) -> list[Proposal]:
    """Merge per-clip proposals of one video and apply NMS once over the union."""
    merged = [p for clip in clip_proposals for p in clip]
    ids = {p.video_id for p in merged}
    if len(ids) > 1:
        raise ValueError(f"stitch_video got proposals from several videos: {sorted(ids)}")
    return nms(merged, threshold)


def write_proposals(path: str | Path | None, proposals: Iterable[Proposal]) -> str:
    """Write proposal CSV sorted by (video_id, score desc); returns the text."""
    by_video: dict[str, list[Proposal]] = {}
    for p in proposals:
        by_video.setdefault(p.video_id, []).append(p)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(PROPOSAL_HEADER)
    for vid in sorted(by_video):
        for p in sort_proposals(by_video[vid]):
            writer.writerow([vid, f"{p.t_start:.6f}", f"{p.t_end:.6f}", f"{p.score:.6f}"])
    text = out.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_proposals(path: str | Path) -> dict[str, list[Proposal]]:
    """Read a proposal CSV into per-video lists, each sorted by score."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PROPOSAL_HEADER:
            raise FormatError(f"{path}: expected header {','.join(PROPOSAL_HEADER)}")
        by_video: dict[str, list[Proposal]] = {}
        for row in reader:
            if not row:
                continue
            try:
                vid, s, e, q = row
                p = Proposal(vid, float(s), float(e), float(q))
            except ValueError as exc:
                raise FormatError(f"{path}: bad proposal row {row}") from exc
            by_video.setdefault(vid, []).append(p)
    return {vid: sort_proposals(ps) for vid, ps in by_video.items()}
