"""End-to-end steps shared by the command line and the demo scripts."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .baseline import ratio_scales
from .data import AnnotationSet, RunConfig, SyntheticSpec, load_annotations, load_features
from .errors import ConfigError, DataError
from .evaluation import EvalConfig, EvalResult, evaluate
from .geometry import total_points
from .inference import Proposal
from .model import CHECKPOINT_VERSION, DPPNet
from .training import EpochLog, build_model, make_labeler, predict_dataset, prepare_clips, train

log = logging.getLogger(__name__)

FORMAT_VERSIONS = {"checkpoint": f"DPPW v{CHECKPOINT_VERSION}", "features": "FTS1",
                   "proposals": "csv v1", "package": __version__}


def synthetic_spec(config: RunConfig) -> SyntheticSpec:
    return SyntheticSpec(num_videos=config.synth_num_videos, frames=config.synth_frames,
                         dim=config.synth_dim, noise=config.synth_noise,
                         amplitude=config.synth_amplitude, seed=config.seed)


def eval_config(config: RunConfig) -> EvalConfig:
    return EvalConfig(config.eval_thresholds, config.eval_an_list, config.eval_average)


def load_split(annotations: str | Path, features_dir: str | Path
               ) -> tuple[AnnotationSet, dict[str, np.ndarray]]:
    """Annotations plus the FTS1 features of every listed video."""
    if not annotations or not features_dir:
        raise ConfigError("annotation and feature paths must be set")
    ann = load_annotations(annotations)
    feats = {}
    for v in ann:
        arr = load_features(Path(features_dir) / f"{v.id}.fts")
        if arr.shape[0] < v.num_frames:
            raise DataError(f"video {v.id!r}: {arr.shape[0]} feature frames, "
                            f"annotation says {v.num_frames}")
        feats[v.id] = arr
    dims = {a.shape[1] for a in feats.values()}
    if len(dims) > 1:
        raise DataError(f"feature dimensions differ across videos: {sorted(dims)}")
    return ann, feats


def feature_dim(features: Mapping[str, np.ndarray]) -> int:
    if not features:
        raise DataError("no videos to train on")
    return next(iter(features.values())).shape[1]


def train_model(config: RunConfig, ann: AnnotationSet, features: Mapping[str, np.ndarray],
                ratio: int | None = None, on_epoch=None) -> tuple[DPPNet, list[EpochLog]]:
    """Fresh network trained with the point-wise targets, or window targets for ``ratio``."""
    labeler = make_labeler(config, ratio)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        clips = prepare_clips(ann, features, labeler, config.model_clip_len)
    model = build_model(config, feature_dim(features), labeler.anchors)
    history = train(model, clips, config, on_epoch)
    return model, history


def propose(model: DPPNet, config: RunConfig, ann: AnnotationSet,
            features: Mapping[str, np.ndarray], ratio: int | None = None
            ) -> dict[str, list[Proposal]]:
    kappa_scales = None
    if ratio is not None:
        kappa_scales = tuple(config.baseline_kappa * s for s in ratio_scales(ratio))
    return predict_dataset(model, ann, features, config, kappa_scales)


def evaluate_proposals(config: RunConfig, ann: AnnotationSet,
                       proposals: Mapping[str, list[Proposal]]) -> EvalResult:
    missing = [v.id for v in ann if v.actions and v.id not in proposals]
    if missing:
        log.warning("%d annotated videos have no proposals (counted as misses): %s",
                    len(missing), ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else ""))
    return evaluate(ann.intervals(), proposals, eval_config(config))


@dataclass
class AblationRow:
    method: str
    ratios: str
    candidates: int
    average_recall: dict[int, float]


ABLATION_ANS = (50, 100, 200)


def run_ablation(config: RunConfig, train_ann: AnnotationSet, test_ann: AnnotationSet,
                 features: Mapping[str, np.ndarray]) -> list[AblationRow]:
    """Train every sliding-window ratio and the point-wise model under one budget."""
    npc = total_points(config.model_clip_len, config.model_levels)
    ecfg = EvalConfig(config.eval_thresholds, ABLATION_ANS, config.eval_average)
    variants = [(f"{r}", r) for r in config.baseline_ratios] + [("n/a", None)]
    rows = []
    for label, ratio in variants:
        method = "dpp" if ratio is None else "sliding window"
        log.info("ablation: training %s (ratios %s)", method, label)
        model, _ = train_model(config, train_ann, features, ratio)
        proposals = propose(model, config, test_ann, features, ratio)
        result = evaluate(test_ann.intervals(), proposals, ecfg)
        rows.append(AblationRow(method, label, npc * (ratio or 1), result.average_recall))
    return rows


def ablation_csv(rows: list[AblationRow]) -> str:
    lines = ["method,ratios,npc," + ",".join(f"AR@{a}" for a in ABLATION_ANS)]
    for r in rows:
        ars = ",".join(f"{100 * r.average_recall[a]:.2f}" for a in ABLATION_ANS)
        lines.append(f"{r.method},{r.ratios},{r.candidates},{ars}")
    return "\n".join(lines) + "\n"


def write_manifest(out_dir: str | Path, command: str, config: RunConfig,
                   extra: Mapping[str, str] | None = None) -> Path:
    """Record how ``command`` was run in OUT/manifest.txt.

    The file holds one ``[command]`` section per command run into the same
    directory; rerunning a command replaces its section.
    """
    lines = [f"[{command}]"]
    lines += [f"format.{k} = {v}" for k, v in FORMAT_VERSIONS.items()]
    lines += [f"{k} = {v}" for k, v in (extra or {}).items()]
    lines += config.to_text().splitlines()
    path = Path(out_dir) / "manifest.txt"
    sections = _read_sections(path) if path.exists() else {}
    sections[command] = "\n".join(lines) + "\n"
    path.write_text("\n".join(sections[k] for k in sections))
    return path


def _read_sections(path: Path) -> dict[str, str]:
    sections: dict[str, list[str]] = {}
    current = None
    for line in path.read_text().splitlines():
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        if current is not None and line:
            sections[current].append(line)
    return {k: "\n".join(v) + "\n" for k, v in sections.items()}
