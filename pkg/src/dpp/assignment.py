"""Point-wise label assignment, log-offset encoding and balanced sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

from .errors import DataError
from .geometry import PointRef, PyramidGeometry, stride

ZERO_POSITIVE_FALLBACK = 16


class Status(IntEnum):
    IGNORED = -1
    NEGATIVE = 0
    POSITIVE = 1


@dataclass(frozen=True)
class GroundTruth:
    """An action interval in sampled-frame units."""

    t_start: float
    t_end: float
    label: str = ""

    def __post_init__(self):
        if not 0 <= self.t_start < self.t_end:
            raise DataError(f"invalid ground truth interval ({self.t_start}, {self.t_end})")


@dataclass(frozen=True)
class AssignConfig:
    scale: float = 3.0   # lambda
    bound: float = 3.0   # eta

    def __post_init__(self):
        if not (self.scale > 0 and self.bound > 0):
            raise ValueError("scale and bound must be positive")


@dataclass(frozen=True)
class PointLabel:
    point: PointRef
    status: Status
    targets: tuple[float, float] | None = None
    gt_index: int = -1


def encode_offsets(level: int, t: int, gt: GroundTruth, scale: float = 3.0) -> tuple[float, float]:
    """Log-scaled (left, right) offsets of ``gt`` seen from point ``(level, t)``."""
    s = stride(level)
    c = s * (t + 0.5)
    left, right = c - gt.t_start, gt.t_end - c
    if left <= 0 or right <= 0:
        raise DataError(f"point at frame {c} is not strictly inside ({gt.t_start}, {gt.t_end})")
    return scale * math.log(left / s), scale * math.log(right / s)


def decode_offsets(level: int, t: int, s1: float, s2: float,
                   scale: float = 3.0) -> tuple[float, float]:
    s = stride(level)
    c = s * (t + 0.5)
    return c - s * math.exp(s1 / scale), c + s * math.exp(s2 / scale)


def encode_array(centers: np.ndarray, norms: np.ndarray, starts: np.ndarray,
                 ends: np.ndarray, scale: float) -> np.ndarray:
    """Vectorised encoding, returns ``(N, 2)``. Caller guarantees positivity."""
    return scale * np.log(np.stack([(centers - starts) / norms, (ends - centers) / norms], axis=1))


def decode_array(centers: np.ndarray, norms: np.ndarray, offsets: np.ndarray,
                 scale: float) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.asarray(offsets, dtype=np.float64)
    starts = centers - norms * np.exp(offsets[:, 0] / scale)
    ends = centers + norms * np.exp(offsets[:, 1] / scale)
    return starts, ends


def check_non_overlapping(gts: Sequence[GroundTruth]) -> None:
    ordered = sorted(gts, key=lambda g: g.t_start)
    for a, b in zip(ordered, ordered[1:]):
        if b.t_start < a.t_end:
            raise DataError(f"overlapping ground truths ({a.t_start}, {a.t_end}) "
                            f"and ({b.t_start}, {b.t_end})")


@dataclass
class PointLabels:
    """Assignment outcome for every pyramid point, in flattened point order."""

    geometry: PyramidGeometry
    status: np.ndarray    # int8, values of Status
    targets: np.ndarray   # (N, 2); zero where not positive
    gt_index: np.ndarray  # -1 where negative

    def __len__(self) -> int:
        return len(self.status)

    def __getitem__(self, i: int) -> PointLabel:
        g = self.geometry
        st = Status(int(self.status[i]))
        tg = tuple(float(v) for v in self.targets[i]) if st is Status.POSITIVE else None
        return PointLabel(PointRef(int(g.point_levels[i]), int(g.point_indices[i])), st, tg,
                          int(self.gt_index[i]))

    def __iter__(self) -> Iterator[PointLabel]:
        return (self[i] for i in range(len(self)))

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.status == Status.POSITIVE)

    @property
    def negatives(self) -> np.ndarray:
        return np.flatnonzero(self.status == Status.NEGATIVE)


def assign_labels(geometry: PyramidGeometry, ground_truths: Sequence[GroundTruth],
                  config: AssignConfig = AssignConfig()) -> PointLabels:
    """Label every point as positive, negative or ignored.

    A point whose mapped frame lies strictly inside a ground truth is positive
    when both encoded offsets fall in ``[-bound, bound]`` and ignored otherwise.
    """
    check_non_overlapping(ground_truths)
    centers = geometry.point_times
    norms = geometry.point_strides
    n = len(centers)
    status = np.full(n, Status.NEGATIVE, dtype=np.int8)
    targets = np.zeros((n, 2))
    gt_index = np.full(n, -1, dtype=np.int64)
    for j, gt in enumerate(ground_truths):
        inside = np.flatnonzero((centers > gt.t_start) & (centers < gt.t_end))
        if not len(inside):
            continue
        enc = encode_array(centers[inside], norms[inside],
                           np.full(len(inside), gt.t_start), np.full(len(inside), gt.t_end),
                           config.scale)
        ok = np.all(np.abs(enc) <= config.bound, axis=1)
        status[inside] = np.where(ok, Status.POSITIVE, Status.IGNORED)
        targets[inside[ok]] = enc[ok]
        gt_index[inside] = j
    return PointLabels(geometry, status, targets, gt_index)


def sample_balanced(labels: PointLabels | np.ndarray, rng: np.random.Generator,
                    fallback: int = ZERO_POSITIVE_FALLBACK) -> np.ndarray:
    """Indices of all positives plus as many uniformly drawn negatives.

    With no positives, ``fallback`` negatives are drawn instead. Ignored
    points are never selected. Returned indices are sorted.
    """
    status = np.asarray(getattr(labels, "status", labels))
    pos = np.flatnonzero(status == Status.POSITIVE)
    neg = np.flatnonzero(status == Status.NEGATIVE)
    want = len(pos) if len(pos) else fallback
    take = min(want, len(neg))
    chosen = rng.choice(neg, size=take, replace=False) if take else neg[:0]
    return np.sort(np.concatenate([pos, chosen]))
