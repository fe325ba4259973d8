"""Pyramid level arithmetic: strides, level lengths, point-to-frame mapping.

Levels are numbered from 1. Level ``l`` has stride ``2**(l+1)`` frames, so the
first level sits at a quarter of the clip's temporal resolution.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

DEFAULT_CLIP_LEN = 256
DEFAULT_LEVELS = 6


def stride(level: int) -> int:
    return 2 ** (level + 1)


def _check(clip_len: int, num_levels: int) -> None:
    if num_levels < 1:
        raise ValueError(f"need at least one level, got {num_levels}")
    if clip_len <= 0 or clip_len % stride(num_levels):
        raise ValueError(
            f"clip length {clip_len} is not divisible by the coarsest stride {stride(num_levels)}")


def level_lengths(clip_len: int, num_levels: int) -> tuple[int, ...]:
    _check(clip_len, num_levels)
    return tuple(clip_len // stride(l) for l in range(1, num_levels + 1))


def total_points(clip_len: int, num_levels: int) -> int:
    return sum(level_lengths(clip_len, num_levels))


@dataclass(frozen=True)
class PointRef:
    level: int
    index: int


@dataclass(frozen=True)
class PyramidGeometry:
    clip_len: int = DEFAULT_CLIP_LEN
    num_levels: int = DEFAULT_LEVELS

    def __post_init__(self):
        _check(self.clip_len, self.num_levels)

    @property
    def levels(self) -> range:
        return range(1, self.num_levels + 1)

    @property
    def lengths(self) -> tuple[int, ...]:
        return level_lengths(self.clip_len, self.num_levels)

    @property
    def total_points(self) -> int:
        return sum(self.lengths)

    def level_length(self, level: int) -> int:
        if level not in self.levels:
            raise ValueError(f"level {level} outside 1..{self.num_levels}")
        return self.clip_len // stride(level)

    def point_to_time(self, level: int, t: int) -> float:
        """Frame position of point ``t`` on ``level`` in clip coordinates."""
        if not 0 <= t < self.level_length(level):
            raise ValueError(f"index {t} out of range for level {level} "
                             f"(length {self.level_length(level)})")
        return float(stride(level) * (t + 0.5))

    def points(self) -> list[PointRef]:
        return [PointRef(l, t) for l in self.levels for t in range(self.level_length(l))]

    # Flattened per-point arrays, ordered by (level ascending, index ascending).
    @cached_property
    def point_levels(self) -> np.ndarray:
        return np.concatenate([np.full(n, l) for l, n in zip(self.levels, self.lengths)])

    @cached_property
    def point_indices(self) -> np.ndarray:
        return np.concatenate([np.arange(n) for n in self.lengths])

    @cached_property
    def point_strides(self) -> np.ndarray:
        return (2.0 ** (self.point_levels + 1)).astype(np.float64)

    @cached_property
    def point_times(self) -> np.ndarray:
        return self.point_strides * (self.point_indices + 0.5)
