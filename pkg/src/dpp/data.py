"""Annotation and feature files, clip planning, synthetic data, run configuration."""
from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .assignment import GroundTruth
from .errors import ConfigError, DataError, FormatError
from .evaluation import tiou_thresholds

FEATURE_MAGIC = b"FTS1"
DEFAULT_FPS = 8.0
CLIP_LEN = 256
CLIP_STEP = 128
MIN_GT_FRAMES = 2.0


# ---- annotations ----------------------------------------------------------

@dataclass(frozen=True)
class Action:
    start_sec: float
    end_sec: float
    label: str = "action"


@dataclass
class Video:
    id: str
    num_frames: int
    fps_sampled: float = DEFAULT_FPS
    actions: list[Action] = field(default_factory=list)

    @property
    def duration(self) -> float:
        return self.num_frames / self.fps_sampled

    def intervals(self) -> list[tuple[float, float]]:
        """Action intervals in seconds."""
        return [(a.start_sec, a.end_sec) for a in self.actions]

    def ground_truths(self) -> list[GroundTruth]:
        """Actions converted to sampled-frame units."""
        return [GroundTruth(a.start_sec * self.fps_sampled, a.end_sec * self.fps_sampled, a.label)
                for a in self.actions]

    def validate(self) -> None:
        if self.num_frames < 1 or self.fps_sampled <= 0:
            raise DataError(f"video {self.id!r}: num_frames and fps_sampled must be positive")
        eps = 1e-9
        for a in self.actions:
            if not (0 <= a.start_sec < a.end_sec <= self.duration + eps):
                raise DataError(f"video {self.id!r}: action ({a.start_sec}, {a.end_sec}) "
                                f"outside [0, {self.duration}] or empty")
        ordered = sorted(self.actions, key=lambda a: a.start_sec)
        for a, b in zip(ordered, ordered[1:]):
            if b.start_sec < a.end_sec:
                raise DataError(f"video {self.id!r}: overlapping actions "
                                f"({a.start_sec}, {a.end_sec}) and ({b.start_sec}, {b.end_sec})")


@dataclass
class AnnotationSet:
    videos: list[Video] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.videos)

    def __iter__(self):
        return iter(self.videos)

    def by_id(self) -> dict[str, Video]:
        return {v.id: v for v in self.videos}

    def intervals(self) -> dict[str, list[tuple[float, float]]]:
        return {v.id: v.intervals() for v in self.videos}

    def validate(self) -> None:
        seen = set()
        for v in self.videos:
            if v.id in seen:
                raise DataError(f"duplicate video id {v.id!r}")
            seen.add(v.id)
            v.validate()

    def to_json(self) -> dict[str, Any]:
        return {"videos": [
            {"id": v.id, "num_frames": v.num_frames, "fps_sampled": v.fps_sampled,
             "actions": [{"start_sec": a.start_sec, "end_sec": a.end_sec, "label": a.label}
                         for a in v.actions]}
            for v in self.videos]}


def parse_annotations(doc: Any) -> AnnotationSet:
    if not isinstance(doc, dict) or not isinstance(doc.get("videos"), list):
        raise DataError("annotation file must be an object with a 'videos' list")
    videos = []
    for i, entry in enumerate(doc["videos"]):
        vid = entry.get("id", f"#{i}") if isinstance(entry, dict) else f"#{i}"
        try:
            actions = [Action(float(a["start_sec"]), float(a["end_sec"]), str(a.get("label", "")))
                       for a in entry.get("actions", [])]
            num_frames = entry["num_frames"]
            if int(num_frames) != num_frames:
                raise ValueError("num_frames must be an integer")
            video = Video(str(entry["id"]), int(num_frames),
                          float(entry.get("fps_sampled", DEFAULT_FPS)), actions)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise DataError(f"video {vid!r}: schema violation ({exc})") from exc
        videos.append(video)
    ann = AnnotationSet(videos)
    ann.validate()
    return ann


def load_annotations(path: str | Path) -> AnnotationSet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return parse_annotations(doc)


def store_annotations(path: str | Path, ann: AnnotationSet) -> None:
    Path(path).write_text(json.dumps(ann.to_json(), indent=1) + "\n")


# ---- feature files --------------------------------------------------------

def store_features(path: str | Path, features: np.ndarray) -> None:
    """Write a time-major ``(T, D)`` array as an FTS1 file."""
    features = np.asarray(features)
    if features.ndim != 2:
        raise FormatError(f"features must be (T, D), got shape {features.shape}")
    if not np.all(np.isfinite(features)):
        raise FormatError("features contain non-finite values")
    t, d = features.shape
    payload = np.ascontiguousarray(features, dtype="<f4").tobytes()
    Path(path).write_bytes(FEATURE_MAGIC + struct.pack("<II", t, d) + payload)


def load_features(path: str | Path) -> np.ndarray:
    """Read an FTS1 file into a float32 ``(T, D)`` array."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: not an FTS1 feature file")
    t, d = struct.unpack_from("<II", data, 4)
    if len(data) != 12 + 4 * t * d:
        raise FormatError(f"{path}: expected {12 + 4 * t * d} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=12).reshape(t, d).astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite feature values")
    return arr


# ---- clip planning --------------------------------------------------------

@dataclass(frozen=True)
class ClipPlan:
    num_frames: int
    offsets: tuple[int, ...]
    clip_len: int = CLIP_LEN
    step: int = CLIP_STEP

    @property
    def padding(self) -> int:
        """Zero frames appended to the final clip."""
        return max(0, self.offsets[-1] + self.clip_len - self.num_frames)


def plan_clips(num_frames: int, clip_len: int = CLIP_LEN, step: int = CLIP_STEP) -> ClipPlan:
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    offsets = [0]
    while offsets[-1] + clip_len < num_frames:
        offsets.append(offsets[-1] + step)
    return ClipPlan(num_frames, tuple(offsets), clip_len, step)


def extract_clip(features: np.ndarray, offset: int, clip_len: int = CLIP_LEN) -> np.ndarray:
    """``(D, clip_len)`` slice of a ``(D, T)`` sequence, zero-padded at the tail."""
    d, t = features.shape
    out = np.zeros((d, clip_len), dtype=features.dtype)
    chunk = features[:, offset:offset + clip_len]
    out[:, :chunk.shape[1]] = chunk
    return out


def clip_ground_truths(gts: list[GroundTruth], offset: int, clip_len: int = CLIP_LEN,
                       min_frames: float = MIN_GT_FRAMES) -> list[GroundTruth]:
    """Ground truths overlapping a clip, shifted into clip-local frames.

    Intervals keep their full extent (they may start before 0 or end after
    ``clip_len``); only overlap with the clip decides membership.
    """
    out = []
    for g in gts:
        if g.t_end - g.t_start < min_frames:
            warnings.warn(f"dropping ground truth ({g.t_start}, {g.t_end}): shorter than "
                          f"{min_frames} frames", stacklevel=2)
            continue
        if g.t_end > offset and g.t_start < offset + clip_len:
            out.append(_ShiftedGT(g.t_start - offset, g.t_end - offset, g.label))
    return out


@dataclass(frozen=True)
class _ShiftedGT(GroundTruth):
    # clip-local intervals may begin before the clip
    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise DataError(f"invalid ground truth interval ({self.t_start}, {self.t_end})")


# ---- synthetic data -------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    num_videos: int = 200
    frames: int = 640
    dim: int = 32
    noise: float = 1.0
    amplitude: float = 3.0
    ramp: float = 0.1
    extra_segments_mean: float = 3.0
    min_length: int = 16
    max_length: int = 192
    min_gap: int = 16
    fps: float = DEFAULT_FPS
    seed: int = 0
    max_tries: int = 100


def _place_segments(spec: SyntheticSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    for _ in range(spec.max_tries):
        count = 1 + int(rng.poisson(spec.extra_segments_mean))
        lengths = np.exp(rng.uniform(math.log(spec.min_length), math.log(spec.max_length), count))
        lengths = np.maximum(np.round(lengths).astype(int), spec.min_length)
        free = spec.frames - int(lengths.sum()) - spec.min_gap * (count - 1)
        if free < 0:
            continue
        # split the slack into count + 1 non-negative gaps
        cuts = np.sort(rng.integers(0, free + 1, size=count))
        gaps = np.diff(np.concatenate([[0], cuts]))
        segs, pos = [], 0
        for i, (gap, length) in enumerate(zip(gaps, lengths)):
            pos += int(gap) + (spec.min_gap if i else 0)
            segs.append((pos, pos + int(length)))
            pos += int(length)
        return segs
    raise DataError(f"could not pack segments into {spec.frames} frames "
                    f"after {spec.max_tries} attempts")


def _envelope(length: int, ramp: float) -> np.ndarray:
    r = max(1, int(round(ramp * length)))
    env = np.ones(length)
    up = (np.arange(r) + 1) / (r + 1)
    env[:r] = up
    env[length - r:] = np.minimum(env[length - r:], up[::-1])
    return env


def generate_synthetic(spec: SyntheticSpec) -> tuple[dict[str, np.ndarray], AnnotationSet]:
    """Noise sequences with a fixed direction added inside each action.

    Returns time-major ``(T, D)`` float32 features keyed by video id, plus the
    matching annotations. Each video draws from its own seed-derived stream.
    """
    direction = np.random.default_rng([spec.seed, 0]).standard_normal(spec.dim)
    direction /= np.linalg.norm(direction)
    features, videos = {}, []
    for i in range(spec.num_videos):
        rng = np.random.default_rng([spec.seed, 1, i])
        vid = f"video_{i:04d}"
        segs = _place_segments(spec, rng)
        x = rng.standard_normal((spec.frames, spec.dim)) * spec.noise
        for s, e in segs:
            x[s:e] += spec.amplitude * _envelope(e - s, spec.ramp)[:, None] * direction[None, :]
        features[vid] = x.astype(np.float32)
        videos.append(Video(vid, spec.frames, spec.fps,
                            [Action(s / spec.fps, e / spec.fps, "action") for s, e in segs]))
    ann = AnnotationSet(videos)
    ann.validate()
    return features, ann


def write_dataset(out_dir: str | Path, features: dict[str, np.ndarray], ann: AnnotationSet,
                  holdout: int = 0) -> dict[str, Path]:
    """Write features/<id>.fts plus train.json / test.json (last ``holdout`` videos)."""
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    for vid in sorted(features):
        store_features(feat_dir / f"{vid}.fts", features[vid])
    split = len(ann.videos) - holdout
    paths = {"features": feat_dir, "train": out_dir / "train.json", "test": out_dir / "test.json"}
    store_annotations(paths["train"], AnnotationSet(ann.videos[:split]))
    store_annotations(paths["test"], AnnotationSet(ann.videos[split:]))
    return paths


# ---- run configuration ----------------------------------------------------

def _parse_floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        start, step, stop = (float(v) for v in text.split(":"))
        return tiou_thresholds(start, step, stop)
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _fmt(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    model_levels: int = 6
    model_clip_len: int = CLIP_LEN
    model_width: int = 256
    assign_lambda: float = 3.0
    assign_eta: float = 3.0
    train_lr: float = 1e-4
    train_epochs: int = 10
    train_momentum: float = 0.9
    train_weight_decay: float = 1e-4
    train_milestones: tuple[int, ...] = (7, 10)
    train_batch_clips: int = 1
    train_feature_noise: float = 0.0
    nms_threshold: float = 0.7
    eval_thresholds: tuple[float, ...] = field(default_factory=tiou_thresholds)
    eval_an_list: tuple[int, ...] = (50, 100, 200)
    eval_average: str = "micro"
    baseline_kappa: float = 2.0
    baseline_ratios: tuple[int, ...] = (1, 2, 3, 5)
    synth_num_videos: int = 200
    synth_frames: int = 640
    synth_dim: int = 32
    synth_noise: float = 1.0
    synth_amplitude: float = 3.0
    synth_holdout: int = 50
    seed: int = 0
    paths_train_annotations: str = ""
    paths_test_annotations: str = ""
    paths_features: str = ""

    def __post_init__(self):
        checks = [
            (self.model_levels >= 1, "model.levels must be >= 1"),
            (self.model_clip_len % 2 ** (self.model_levels + 1) == 0,
             "model.clip_len must be divisible by 2^(levels+1)"),
            (self.model_width >= 1, "model.width must be positive"),
            (self.assign_lambda > 0 and self.assign_eta > 0, "assign.lambda/eta must be positive"),
            (self.train_lr > 0, "train.lr must be positive"),
            (self.train_epochs >= 1, "train.epochs must be >= 1"),
            (0 <= self.train_momentum < 1, "train.momentum must be in [0, 1)"),
            (self.train_weight_decay >= 0, "train.weight_decay must be >= 0"),
            (self.train_batch_clips >= 1, "train.batch_clips must be >= 1"),
            (self.train_feature_noise >= 0, "train.feature_noise must be >= 0"),
            (0 < self.nms_threshold <= 1, "nms.threshold must be in (0, 1]"),
            (len(self.eval_thresholds) > 0 and all(0 < t <= 1 for t in self.eval_thresholds)
             and list(self.eval_thresholds) == sorted(self.eval_thresholds),
             "eval.thresholds must be ascending in (0, 1]"),
            (all(a >= 1 for a in self.eval_an_list), "eval.an_list must be positive"),
            (self.eval_average in ("micro", "macro"), "eval.average must be micro or macro"),
            (self.baseline_kappa > 0, "baseline.kappa must be positive"),
            (all(r in (1, 2, 3, 5) for r in self.baseline_ratios), "baseline.ratios must be in {1,2,3,5}"),
            (self.synth_num_videos >= 1 and self.synth_frames >= 1 and self.synth_dim >= 1,
             "synth sizes must be positive"),
            (0 <= self.synth_holdout <= self.synth_num_videos, "synth.holdout out of range"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    # "model.levels" <-> model_levels; "seed" stays as is
    @staticmethod
    def key_of(field_name: str) -> str:
        return field_name.replace("_", ".", 1) if "_" in field_name else field_name

    @classmethod
    def keys(cls) -> dict[str, str]:
        return {cls.key_of(f.name): f.name for f in fields(cls)}

    @classmethod
    def from_text(cls, text: str, base_dir: str | Path | None = None) -> "RunConfig":
        values: dict[str, Any] = {}
        keys = cls.keys()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in keys:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[keys[key]] = value
        return cls.from_strings(values, base_dir)

    @classmethod
    def from_strings(cls, values: dict[str, str], base_dir: str | Path | None = None) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        parsed = {}
        for name, value in values.items():
            kind = types[name]
            try:
                parsed[name] = _PARSERS[kind](value)
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"bad value for {cls.key_of(name)}: {value!r}") from exc
            if name.startswith("paths_") and parsed[name] and base_dir is not None:
                parsed[name] = str((Path(base_dir) / parsed[name]).resolve())
        return cls(**parsed)

    def override(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{self.key_of(f.name)} = {_fmt(getattr(self, f.name))}\n"
                       for f in fields(self))


_PARSERS: dict[str, Callable[[str], Any]] = {
    "int": int,
    "float": float,
    "str": str,
    "tuple[int, ...]": _parse_ints,
    "tuple[float, ...]": _parse_floats,
}


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_text(text, base_dir=path.parent)
