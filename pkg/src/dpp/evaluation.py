"""Average recall at a fixed number of proposals per video (AR@AN)."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .inference import Proposal, tiou_matrix

Interval = tuple[float, float]


def tiou_thresholds(start: float = 0.5, step: float = 0.05, stop: float = 1.0) -> tuple[float, ...]:
    """Inclusive threshold grid, rounded so 0.55 etc. compare cleanly."""
    n = int(round((stop - start) / step))
    return tuple(round(start + i * step, 10) for i in range(n + 1))


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[float, ...] = field(default_factory=tiou_thresholds)
    an_list: tuple[int, ...] = (50, 100, 200)
    average: str = "micro"  # "micro": pool all GTs; "macro": mean of per-video recalls

    def __post_init__(self):
        th = self.thresholds
        if not th or any(not 0 < t <= 1 for t in th) or list(th) != sorted(th):
            raise ValueError(f"thresholds must be ascending in (0, 1], got {th}")
        if any(a < 1 for a in self.an_list):
            raise ValueError(f"AN values must be positive, got {self.an_list}")
        if self.average not in ("micro", "macro"):
            raise ValueError(f"average must be 'micro' or 'macro', got {self.average!r}")

    def without_perfect_overlap(self) -> "EvalConfig":
        """Same grid minus the 1.0 threshold, for comparisons with other toolkits."""
        return EvalConfig(tuple(t for t in self.thresholds if t < 1.0), self.an_list, self.average)


def _best_overlaps(gts: Sequence[Interval], proposals: Sequence[Proposal], an: int) -> np.ndarray:
    """Best tIoU of each GT against the top-``an`` proposals (0 with none)."""
    if not gts:
        return np.zeros(0)
    top = proposals[:an]
    if not top:
        return np.zeros(len(gts))
    g = np.asarray(gts, dtype=float)
    m = tiou_matrix(g[:, 0], g[:, 1], [p.t_start for p in top], [p.t_end for p in top])
    return m.max(axis=1)


def _recall_matrix(gts_by_video: Mapping[str, Sequence[Interval]],
                   proposals_by_video: Mapping[str, Sequence[Proposal]],
                   an: int, thresholds: Sequence[float], average: str) -> np.ndarray:
    total = sum(len(v) for v in gts_by_video.values())
    if total == 0:
        raise DataError("recall is undefined without ground truths")
    th = np.asarray(thresholds, dtype=float)
    hits = np.zeros(len(th))
    per_video = []
    for vid in sorted(gts_by_video):
        gts = gts_by_video[vid]
        if not gts:
            continue
        best = _best_overlaps(gts, proposals_by_video.get(vid, ()), an)
        recalled = (best[None, :] >= th[:, None]).sum(axis=1)
        hits += recalled
        per_video.append(recalled / len(gts))
    if average == "macro":
        return np.mean(per_video, axis=0)
    return hits / total


def recall_at(gts_by_video: Mapping[str, Sequence[Interval]],
              proposals_by_video: Mapping[str, Sequence[Proposal]],
              an: int, threshold: float, average: str = "micro") -> float:
    """Fraction of GTs matched (tIoU >= threshold) by a top-``an`` proposal of their video.

    Proposals must already be sorted by score, best first. Matching is not
    one-to-one: a proposal may recall several GTs.
    """
    return float(_recall_matrix(gts_by_video, proposals_by_video, an, [threshold], average)[0])


def average_recall_at_an(gts_by_video, proposals_by_video, an: int,
                         thresholds: Sequence[float] = tiou_thresholds(),
                         average: str = "micro") -> float:
    return float(np.mean(_recall_matrix(gts_by_video, proposals_by_video, an, thresholds, average)))


@dataclass
class EvalResult:
    thresholds: tuple[float, ...]
    an_list: tuple[int, ...]
    recall: np.ndarray  # (len(thresholds), len(an_list))

    @property
    def average_recall(self) -> dict[int, float]:
        return {an: float(self.recall[:, j].mean()) for j, an in enumerate(self.an_list)}


def evaluate(gts_by_video, proposals_by_video, config: EvalConfig = EvalConfig()) -> EvalResult:
    cols = [_recall_matrix(gts_by_video, proposals_by_video, an, config.thresholds, config.average)
            for an in config.an_list]
    recall = np.stack(cols, axis=1) if cols else np.zeros((len(config.thresholds), 0))
    return EvalResult(tuple(config.thresholds), tuple(config.an_list), recall)


def emit_ar_curve(results: Mapping[int, float] | EvalResult) -> str:
    """``AN,AR`` CSV rows, ascending AN, AR to 4 decimals."""
    if isinstance(results, EvalResult):
        results = results.average_recall
    lines = ["AN,AR"] + [f"{an},{results[an]:.4f}" for an in sorted(results)]
    return "\n".join(lines) + "\n"


def emit_recall_matrix(result: EvalResult) -> str:
    out = io.StringIO()
    out.write("threshold,AN,recall\n")
    for i, th in enumerate(result.thresholds):
        for j, an in enumerate(result.an_list):
            out.write(f"{th:.2f},{an},{result.recall[i, j]:.4f}\n")
    return out.getvalue()


def write_report(out_dir: str | Path, result: EvalResult) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    curve, matrix = out_dir / "ar_report.csv", out_dir / "ar_matrix.csv"
    curve.write_text(emit_ar_curve(result))
    matrix.write_text(emit_recall_matrix(result))
    return curve, matrix
