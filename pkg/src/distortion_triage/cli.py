"""Command-line entry point: synth, dataset, train, classify, restore, run and eval.

Exit status: 0 on success, 1 on a usage or configuration error, 2 when a
batch finished but some items failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import eval as metrics
from .errors import ConfigError, TriageError
from .features import read_feature_csv, write_feature_csv
from .gbdt import VARIANTS, save_model, train_ensemble
from .image_core import load_image, save_image
from .pipeline import PipelineConfig, list_images, process_batch, read_provenance, write_provenance
from .synth import DistortionKind, DistortionSpec, RegionSpec, apply_distortion, build_dataset, class_of, rng_for

logger = logging.getLogger("distortion_triage")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2
MANIFEST_NAME = "manifest.jsonl"


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2, which is reserved for partial failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _kind(text: str) -> DistortionKind:
    try:
        return DistortionKind.parse(text)
    except (ValueError, TriageError):
        raise argparse.ArgumentTypeError(f"unknown distortion kind {text!r} (expected D1..D10)") from None


def _region(text: str) -> RegionSpec:
    try:
        values = [float(v) for v in text.split(",")]
        if len(values) not in (4, 5):
            raise ValueError
        return RegionSpec(*values)
    except (ValueError, TriageError):
        raise argparse.ArgumentTypeError("region must be cx,cy,rx,ry[,feather] in relative units") from None


def _severity(text: str) -> int:
    value = int(text)
    if not 1 <= value <= 5:
        raise argparse.ArgumentTypeError("severity must be 1..5")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config file must hold a JSON object")
    return obj


def image_seed(seed: int, index: int) -> int:
    """Per-image seed derived from the run seed and the image's position."""
    return int(rng_for(seed, index).integers(0, 2**63))


# ------------------------------------------------------------ commands

def cmd_synth(args) -> int:
    if args.region is not None and not args.kind.is_local:
        raise ConfigError(f"--region only applies to local kinds, not {args.kind.value}")
    paths = list_images(args.input)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines, failures = [], 0
    for i, path in enumerate(paths):
        seed = image_seed(args.seed, i)
        region = args.region
        if args.kind.is_local and region is None:
            region = RegionSpec.random(rng_for(seed, 1))
        spec = DistortionSpec(args.kind, args.severity, seed, region)
        entry = {"source": str(path), **spec.to_dict(), "class": int(class_of(args.kind)), "output_path": None}
        try:
            distorted = apply_distortion(load_image(path), spec)
            target = out_dir / path.name
            save_image(distorted, target)
            entry["output_path"] = str(target)
        except (TriageError, OSError, ValueError) as exc:
            failures += 1
            entry["error"] = f"{type(exc).__name__}: {exc}"
            logger.warning("synth failed on %s: %s", path, exc)
        lines.append(json.dumps(entry, sort_keys=True))
    manifest = Path(args.manifest) if args.manifest else out_dir / MANIFEST_NAME
    manifest.write_text("".join(line + "\n" for line in lines))
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_dataset(args) -> int:
    paths = list_images(args.clean)
    if not paths:
        raise ConfigError(f"no images in {args.clean}")
    images = [load_image(p) for p in paths]
    data = build_dataset(images, args.per_class, args.seed, workers=args.workers)
    write_feature_csv(args.out, data.features, data.labels)
    if args.provenance:
        with open(args.provenance, "w") as fh:
            for prov in data.provenance:
                # dataset rows are feature vectors, so no image file is written for them
                entry = {**prov.to_dict(), "source": str(paths[prov.source]), "output_path": None}
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    print(f"wrote {len(data)} rows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    X, y = read_feature_csv(args.data)
    if y is None:
        raise ConfigError(f"{args.data} has no label column")
    if X.shape[0] == 0:
        raise ConfigError(f"{args.data} has no rows")
    ensemble = train_ensemble(X, y, seed=args.seed)
    save_model(ensemble, args.out)
    for variant, model in zip(VARIANTS, ensemble.models):
        acc = float(np.mean(model.predict(X) == y))
        print(f"{variant}: training accuracy {acc:.4f}")
    print(f"ensemble: training accuracy {float(np.mean(ensemble.predict(X) == y)):.4f}")
    return EXIT_OK


def _pipeline_config(args, output_dir=None) -> PipelineConfig:
    conf = _load_config(args.config)
    return PipelineConfig(
        model_path=args.model,
        defilter_params=conf.get("defilter_params", {}),
        output_dir=output_dir,
        workers=args.workers,
    )


def _run_batch(args, output_dir, report, apply_defilter) -> int:
    config = _pipeline_config(args, output_dir)
    ensemble = config.load_ensemble()
    result = process_batch(list_images(args.input), ensemble, config, apply_defilter=apply_defilter)
    if report is not None:
        Path(report).parent.mkdir(parents=True, exist_ok=True)
        write_provenance(report, result.records)
    counts = result.class_counts()
    print(json.dumps({"images": len(result.records), "errors": result.error_count, "classes": counts}, sort_keys=True))
    return EXIT_PARTIAL if result.error_count else EXIT_OK


def cmd_classify(args) -> int:
    return _run_batch(args, None, args.out, apply_defilter=False)


def cmd_restore(args) -> int:
    return _run_batch(args, args.out, args.report, apply_defilter=True)


def cmd_run(args) -> int:
    report = args.report or str(Path(args.out) / "provenance.jsonl")
    return _run_batch(args, args.out, report, apply_defilter=True)


def _read_labels(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".jsonl":
        records = read_provenance(path)
        bad = [r.input_path for r in records if not r.ok]
        if bad:
            raise ConfigError(f"{path}: records without a prediction: {', '.join(bad)}")
        return np.array([r.predicted_class for r in records], dtype=np.int64)
    if path.suffix == ".csv":
        _, labels = read_feature_csv(path)
        if labels is None:
            raise ConfigError(f"{path} has no label column")
        return labels
    try:
        lines = path.read_text().split()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        return np.array([int(v) for v in lines], dtype=np.int64)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_eval(args) -> int:
    if args.mode == "quality":
        if not (args.reference and args.test):
            raise ConfigError("quality mode needs --reference and --test")
        pairs = []
        for ref in list_images(args.reference):
            other = Path(args.test) / ref.name
            if other.exists():
                pairs.append((load_image(ref), load_image(other)))
        report = metrics.quality_report(pairs).to_dict()
        report["pairs"] = len(pairs)
    elif args.mode == "detections":
        if not (args.detections and args.ground_truth):
            raise ConfigError("detections mode needs --detections and --ground-truth")
        dets = metrics.read_detections(args.detections)
        gts = metrics.read_ground_truth(args.ground_truth)
        report = metrics.map_coco(dets, gts).to_dict()
    else:
        if not (args.predicted and args.truth):
            raise ConfigError("classification mode needs --predicted and --truth")
        report = metrics.classification_report(_read_labels(args.predicted), _read_labels(args.truth)).to_dict()
    text = json.dumps({"mode": args.mode, **report}, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="distortion-triage", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, workers=True):
        p.add_argument("--seed", type=int, default=0)
        if workers:
            p.add_argument("--workers", type=_positive, default=1)

    p = sub.add_parser("synth", help="distort every image in a directory")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kind", required=True, type=_kind)
    p.add_argument("--severity", required=True, type=_severity)
    p.add_argument("--region", type=_region, help="cx,cy,rx,ry[,feather] for D8-D10")
    p.add_argument("--manifest", help=f"manifest path (default OUTPUT/{MANIFEST_NAME})")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dataset", help="synthesize a labeled feature CSV")
    p.add_argument("--clean", required=True)
    p.add_argument("--per-class", required=True, type=_positive)
    p.add_argument("--out", required=True)
    p.add_argument("--provenance", help="optional JSONL of per-row distortion specs")
    common(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train the three-variant ensemble")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    common(p, workers=False)
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (
        ("classify", cmd_classify, "predict the distortion class of each image"),
        ("restore", cmd_restore, "classify and write restored images"),
        ("run", cmd_run, "classify, restore and write a provenance report"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--out", required=True, help="report JSONL for classify, output directory otherwise")
        if name != "classify":
            p.add_argument("--report", help="provenance JSONL path")
        p.add_argument("--config", help="JSON file with defilter_params overrides")
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="quality, detection or classification metrics")
    p.add_argument("--mode", required=True, choices=("quality", "detections", "classification"))
    p.add_argument("--reference", help="quality: directory of reference images")
    p.add_argument("--test", help="quality: directory of images to score, matched by file name")
    p.add_argument("--detections", help="detections: CSV image_id,category_id,x,y,w,h,score")
    p.add_argument("--ground-truth", help="detections: CSV image_id,category_id,x,y,w,h")
    p.add_argument("--predicted", help="classification: provenance JSONL, feature CSV or label list")
    p.add_argument("--truth", help="classification: feature CSV or label list")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TriageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
