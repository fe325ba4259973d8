"""Command line: ``dpp {synth,train,infer,eval,gradcheck,ablate}``.

Exit codes: 0 success, 2 config/data error, 3 numerical failure,
4 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .data import RunConfig, generate_synthetic, load_annotations, load_config, write_dataset
from .errors import ConfigError, DataError, NumericalError
from .evaluation import emit_ar_curve, write_report
from .gradcheck import run_gradcheck, worst
from .inference import read_proposals, write_proposals
from .training import TRAIN_LOG_HEADER, build_model

log = logging.getLogger("dpp")

EXIT_OK, EXIT_DATA, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


def _config(args) -> RunConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.override(seed=args.seed)
    return config


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    config = _config(args)
    out = _out(args)
    features, ann = generate_synthetic(pipeline.synthetic_spec(config))
    paths = write_dataset(out, features, ann, config.synth_holdout)
    dataset_cfg = out / "dataset.cfg"
    dataset_cfg.write_text(
        f"paths.train_annotations = {paths['train'].resolve()}\n"
        f"paths.test_annotations = {paths['test'].resolve()}\n"
        f"paths.features = {paths['features'].resolve()}\n")
    pipeline.write_manifest(out, "synth", config)
    print(f"wrote {len(ann)} videos to {out} ({config.synth_holdout} held out)")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config(args)
    out = _out(args)
    ann, feats = pipeline.load_split(config.paths_train_annotations, config.paths_features)
    log_path = out / "train_log.csv"
    log_path.write_text(TRAIN_LOG_HEADER + "\n")

    def on_epoch(entry):
        with log_path.open("a") as fh:
            fh.write(entry.csv_row() + "\n")
        print(entry.csv_row(), flush=True)

    model, _ = pipeline.train_model(config, ann, feats, on_epoch=on_epoch)
    model.save(out / "weights.dppw")
    pipeline.write_manifest(out, "train", config, {"architecture": model.architecture()})
    return EXIT_OK


def cmd_infer(args) -> int:
    config = _config(args)
    out = _out(args)
    ann, feats = pipeline.load_split(config.paths_test_annotations, config.paths_features)
    proposals = {}
    if len(ann):
        model = build_model(config, pipeline.feature_dim(feats))
        model.load(args.checkpoint or out / "weights.dppw")
        proposals = pipeline.propose(model, config, ann, feats)
    write_proposals(out / "proposals.csv", [p for ps in proposals.values() for p in ps])
    pipeline.write_manifest(out, "infer", config, {"checkpoint": str(args.checkpoint)})
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _config(args)
    out = _out(args)
    ann_path = args.annotations or config.paths_test_annotations
    if not ann_path:
        raise ConfigError("no annotations given (--annotations or paths.test_annotations)")
    ann = load_annotations(ann_path)
    proposals = read_proposals(args.proposals or out / "proposals.csv")
    result = pipeline.evaluate_proposals(config, ann, proposals)
    write_report(out, result)
    pipeline.write_manifest(out, "eval", config)
    sys.stdout.write(emit_ar_curve(result))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(seed=args.seed or 0, corrupt=args.corrupt)
    report = "\n".join(r.line() for r in results) + "\n"
    bad = worst(results)
    if args.out:
        out = _out(args)
        (out / "gradcheck.txt").write_text(report)
        pipeline.write_manifest(out, "gradcheck", _config(args), {"corrupt": str(args.corrupt)})
    sys.stdout.write(report)
    if not bad.passed:
        print(f"FAILED: worst offender {bad.name} (max rel err {bad.max_rel_err:.3e})",
              file=sys.stderr)
        return EXIT_VERIFY
    print(f"all {len(results)} gradient checks passed")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _config(args)
    out = _out(args)
    train_ann, feats = pipeline.load_split(config.paths_train_annotations, config.paths_features)
    test_ann, test_feats = pipeline.load_split(config.paths_test_annotations, config.paths_features)
    feats.update(test_feats)
    rows = pipeline.run_ablation(config, train_ann, test_ann, feats)
    text = pipeline.ablation_csv(rows)
    (out / "ablation.csv").write_text(text)
    pipeline.write_manifest(out, "ablate", config)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "synth": (cmd_synth, "generate a seeded synthetic dataset"),
    "train": (cmd_train, "train the point-wise network"),
    "infer": (cmd_infer, "write ranked, NMS-filtered proposals"),
    "eval": (cmd_eval, "AR@AN report for a proposal file"),
    "gradcheck": (cmd_gradcheck, "finite-difference verification of all gradients"),
    "ablate": (cmd_ablate, "sliding-window vs point-wise comparison"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="key = value run configuration")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default=None if name == "gradcheck" else ".",
                       help="output directory")
        if name == "infer":
            p.add_argument("--checkpoint", type=Path, help="defaults to OUT/weights.dppw")
        if name == "eval":
            p.add_argument("--proposals", type=Path, help="defaults to OUT/proposals.csv")
            p.add_argument("--annotations", type=Path, help="defaults to paths.test_annotations")
        if name == "gradcheck":
            p.add_argument("--corrupt", help=argparse.SUPPRESS)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
