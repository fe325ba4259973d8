"""Sliding-window baseline on the same pyramid.

Each point carries ``ratio`` windows centred on its mapped frame. Windows are
labelled by tIoU against ground truths and regress log offsets normalised by
their half length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assignment import GroundTruth, Status
from .errors import DataError
from .geometry import PyramidGeometry
from .inference import tiou_matrix

# Ratio 2 adds the half-length window; larger sets continue symmetrically in log scale.
RATIO_SCALES = {
    1: (1.0,),
    2: (1.0, 0.5),
    3: (1.0, 0.5, 2.0),
    5: (1.0, 0.5, 2.0, 0.25, 4.0),
}
POSITIVE_TIOU = 0.5


@dataclass(frozen=True)
class WindowSet:
    """Windows in flattened (level, index, scale) order, frame units."""

    geometry: PyramidGeometry
    scales: tuple[float, ...]
    kappa: float
    centers: np.ndarray
    lengths: np.ndarray

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def starts(self) -> np.ndarray:
        return self.centers - self.lengths / 2

    @property
    def ends(self) -> np.ndarray:
        return self.centers + self.lengths / 2

    @property
    def half_lengths(self) -> np.ndarray:
        return self.lengths / 2

    @property
    def kappa_scales(self) -> tuple[float, ...]:
        return tuple(self.kappa * s for s in self.scales)


def ratio_scales(ratio: int) -> tuple[float, ...]:
    try:
        return RATIO_SCALES[ratio]
    except KeyError:
        raise ValueError(f"unsupported window ratio {ratio}; choose from {sorted(RATIO_SCALES)}")


def generate_windows(geometry: PyramidGeometry, ratio: int = 1, kappa: float = 2.0) -> WindowSet:
    scales = ratio_scales(ratio)
    centers = np.repeat(geometry.point_times, len(scales))
    lengths = (kappa * geometry.point_strides[:, None] * np.asarray(scales)[None, :]).reshape(-1)
    return WindowSet(geometry, scales, kappa, centers, lengths)


def assign_windows_by_tiou(windows: WindowSet, gts: Sequence[GroundTruth],
                           threshold: float = POSITIVE_TIOU) -> tuple[np.ndarray, np.ndarray]:
    """Status per window (positive iff best tIoU > threshold) and matched GT index.

    Ties in tIoU go to the earlier ground truth; unmatched windows get -1.
    """
    n = len(windows)
    if not gts:
        return np.full(n, Status.NEGATIVE, dtype=np.int8), np.full(n, -1, dtype=np.int64)
    m = tiou_matrix(windows.starts, windows.ends,
                    [g.t_start for g in gts], [g.t_end for g in gts])
    best = m.argmax(axis=1)  # first maximum wins ties
    pos = m[np.arange(n), best] > threshold
    status = np.where(pos, Status.POSITIVE, Status.NEGATIVE).astype(np.int8)
    return status, np.where(pos, best, -1)


def encode_window_offsets(window: tuple[float, float], gt: GroundTruth,
                          scale: float = 3.0) -> tuple[float, float]:
    start, end = window
    center, half = (start + end) / 2, (end - start) / 2
    left, right = center - gt.t_start, gt.t_end - center
    if left <= 0 or right <= 0:
        raise DataError(f"ground truth ({gt.t_start}, {gt.t_end}) does not contain "
                        f"window center {center}")
    return scale * math.log(left / half), scale * math.log(right / half)


def decode_window_offsets(window: tuple[float, float], s1: float, s2: float,
                          scale: float = 3.0) -> tuple[float, float]:
    start, end = window
    center, half = (start + end) / 2, (end - start) / 2
    return center - half * math.exp(s1 / scale), center + half * math.exp(s2 / scale)


class WindowLabeler:
    """Training targets for the sliding-window variant of the network."""

    def __init__(self, geometry: PyramidGeometry, ratio: int, kappa: float = 2.0,
                 scale: float = 3.0, threshold: float = POSITIVE_TIOU):
        self.windows = generate_windows(geometry, ratio, kappa)
        self.scale = scale
        self.threshold = threshold
        self.anchors = ratio
        self.kappa_scales: tuple[float, ...] | None = self.windows.kappa_scales

    def __call__(self, gts: Sequence[GroundTruth]) -> tuple[np.ndarray, np.ndarray]:
        status, matched = assign_windows_by_tiou(self.windows, gts, self.threshold)
        targets = np.zeros((len(status), 2))
        pos = np.flatnonzero(status == Status.POSITIVE)
        if len(pos):
            g = np.array([(gts[j].t_start, gts[j].t_end) for j in matched[pos]])
            c, h = self.windows.centers[pos], self.windows.half_lengths[pos]
            targets[pos] = self.scale * np.log(np.stack([(c - g[:, 0]) / h, (g[:, 1] - c) / h], 1))
        return status, targets
