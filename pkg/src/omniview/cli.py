"""
Command-line entry point: ingest, augment, synth, nms, eval, bench, report.

Machine-readable results go to stdout (or --output); logs and diagnostics go
to stderr. Exit codes: 0 success, 1 on any toolkit or file error, 2 on usage
errors.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

from pydantic import ValidationError

from . import __version__
from .augment import AugmentPolicy
from .bench import STAGES, build_stage, measure, realtime_check
from .config import Config, load_config, validate_config
from .datasets import (
    BUNDLED_SPLITS,
    SourceTag,
    assemble_split,
    bundled_manifest,
    load_manifest,
    load_source,
    read_dataset,
    write_dataset,
)
from .errors import ArgumentError, OmniviewError, SchemaError
from .evaluation import (
    EpochSeries,
    EvalReport,
    best_epoch,
    evaluate,
    read_detections,
    write_detections,
    write_pr_csv,
)
from .fisheye import CameraPose, FisheyeModel
from .geometry import ImageDims
from .pipeline import augment_dataset, quad_dataset, synthesize_dataset
from .postprocess import nms_by_image
from .recipes import reference_result
from .utils import atomic_write_json, atomic_write_text, format_error_message, load_json, setup_logging

logger = logging.getLogger(__name__)

MODE_ALIASES = {"all_points": "all_points", "voc07": "voc07_11pt", "voc07_11pt": "voc07_11pt"}


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"Input file not found: {p}")
    return p


def _emit(data: Any, output: Optional[str]) -> None:
    if output:
        atomic_write_json(output, data)
        logger.info(f"Wrote {output}")
    else:
        sys.stdout.write(json.dumps(data, indent=2, ensure_ascii=False) + "\n")


def _pick(value: Any, default: Any) -> Any:
    return default if value is None else value


def _parse_source(spec: str) -> Tuple[SourceTag, str]:
    name, sep, path = spec.partition("=")
    if not sep or not path:
        raise ArgumentError(f"--source expects NAME=PATH, got {spec!r}")
    try:
        return SourceTag(name), path
    except ValueError:
        names = ", ".join(t.value for t in SourceTag)
        raise ArgumentError(f"Unknown source {name!r}; choose from {names}")


def cmd_ingest(args: argparse.Namespace, config: Config) -> int:
    if Path(args.manifest).suffix == "" and args.manifest in BUNDLED_SPLITS:
        manifest = bundled_manifest(args.manifest)
    else:
        manifest = load_manifest(_require_file(args.manifest))

    sources = {}
    for spec in args.source or []:
        tag, path = _parse_source(spec)
        sources[tag] = load_source(path, tag, args.class_name)

    result = assemble_split(manifest, sources)
    write_dataset(args.output, result.images)
    logger.info(f"{manifest.split_name}: wrote {result.total} images to {args.output}")
    _emit(result.stats.model_dump(mode="json"), args.stats)
    return 0


def _image_root(args: argparse.Namespace) -> Path:
    return Path(args.image_root) if args.image_root else Path(args.dataset).parent


def cmd_augment(args: argparse.Namespace, config: Config) -> int:
    images = read_dataset(_require_file(args.dataset))
    policy = AugmentPolicy.from_file(_require_file(args.policy)) if args.policy else AugmentPolicy.default()
    seed = _pick(args.seed, config.pipeline.seed)
    records = augment_dataset(
        images,
        args.output,
        policy,
        seed,
        image_root=_image_root(args),
        workers=_pick(args.workers, config.pipeline.workers),
    )
    logger.info(f"Augmented {len(records)} images into {args.output}")
    return 0


def cmd_synth(args: argparse.Namespace, config: Config) -> int:
    images = read_dataset(_require_file(args.dataset))
    samples = _pick(args.samples_per_edge, config.fisheye.samples_per_edge)
    workers = _pick(args.workers, config.pipeline.workers)

    if args.quad:
        out_dims = ImageDims(args.width, args.height) if args.width and args.height else None
        corners = list(zip(args.quad[0::2], args.quad[1::2]))
        records = quad_dataset(
            images,
            args.output,
            corners,
            out_dims=out_dims,
            samples_per_edge=samples,
            image_root=_image_root(args),
            workers=workers,
        )
        logger.info(f"Warped {len(records)} images into {args.output}")
        return 0

    dims = ImageDims(_pick(args.width, 640), _pick(args.height, 640))
    fov = math.radians(args.fov)
    default = FisheyeModel.centered(dims, fov)
    model = FisheyeModel(
        _pick(args.focal, default.focal),
        _pick(args.cx, default.cx),
        _pick(args.cy, default.cy),
        dims,
        fov,
    )
    pose = CameraPose.from_euler(args.roll, args.pitch, args.yaw, args.camera_height)
    records = synthesize_dataset(
        images,
        args.output,
        model,
        pose,
        source_focal=args.source_focal,
        samples_per_edge=samples,
        image_root=_image_root(args),
        workers=workers,
    )
    logger.info(f"Synthesized {len(records)} fisheye images into {args.output}")
    return 0


def cmd_nms(args: argparse.Namespace, config: Config) -> int:
    dets = read_detections(_require_file(args.det))
    kept = nms_by_image(
        dets,
        _pick(args.iou, config.postprocess.iou_threshold),
        _pick(args.score, config.postprocess.score_threshold),
    )
    write_detections(args.output, kept)
    return 0


def cmd_eval(args: argparse.Namespace, config: Config) -> int:
    gt = read_dataset(_require_file(args.gt))
    dets = read_detections(_require_file(args.det))
    mode = MODE_ALIASES[_pick(args.mode, config.evaluation.mode)]
    report = evaluate(dets, gt, _pick(args.iou, config.evaluation.iou_threshold), mode, args.epoch)
    logger.info(f"AP ({mode}) = {report.ap:.4f}: {report.counts.n_tp} TP, {report.counts.n_fp} FP")
    if args.csv:
        write_pr_csv(args.csv, report.pr_points)
    _emit(report.model_dump(mode="json"), args.output)
    return 0


def cmd_bench(args: argparse.Namespace, config: Config) -> int:
    warmup = _pick(args.warmup, config.bench.warmup)
    repeat = _pick(args.repeat, config.bench.repeat)
    overhead = _pick(args.overhead_ms, config.bench.overhead_ms)
    if repeat < 1:
        raise ArgumentError(f"--repeat must be at least 1, got {repeat}")
    stage, inputs = build_stage(args.stage, _pick(args.seed, config.pipeline.seed), warmup + repeat)
    stats = measure(stage, inputs, warmup, overhead)
    logger.info(f"{args.stage}: mean {stats.mean_ms:.3f} ms over {stats.n_samples} images")
    result: Dict[str, Any] = {
        "stage": args.stage,
        "stats": stats.model_dump(mode="json"),
        "fps": stats.fps,
        "reported": [row.model_dump(mode="json") for row in realtime_check()],
    }
    _emit(result, args.output)
    return 0


def _load_report(path: str) -> EvalReport:
    try:
        return EvalReport.model_validate(load_json(_require_file(path)))
    except ValidationError as e:
        raise SchemaError(f"Invalid evaluation report {path}: {e}")


def cmd_report(args: argparse.Namespace, config: Config) -> int:
    reports = [(path, _load_report(path)) for path in args.reports]
    points = []
    modes = set()
    for path, report in reports:
        if report.epoch is None:
            raise SchemaError(f"{path}: report has no epoch; evaluate with --epoch")
        points.append((report.epoch, report.ap))
        modes.add(report.interpolation_mode)
    if len(modes) > 1:
        raise SchemaError(f"Reports mix interpolation modes: {', '.join(sorted(modes))}")
    try:
        series = EpochSeries(points=sorted(points))
    except ValidationError as e:
        raise SchemaError(f"Invalid epoch series: {e}")
    epoch, value = best_epoch(series)

    summary: Dict[str, Any] = {
        "interpolation_mode": modes.pop(),
        "series": [{"epoch": e, "map": m} for e, m in series.points],
        "best_epoch": epoch,
        "best_map": value,
        "best_map_percent": round(100.0 * value, 1),
    }
    if args.model and args.dataset:
        ref = reference_result(args.model, args.dataset, args.fe_locked)
        summary["reference"] = {
            "model": ref.model.value,
            "dataset": ref.dataset,
            "feature_extractor_locked": ref.feature_extractor_locked,
            "map_percent": ref.map_percent,
            "best_epoch": ref.best_epoch,
            "delta_percent": round(100.0 * value - ref.map_percent, 1),
        }
    if args.csv:
        lines = ["epoch,map"] + [f"{e},{m!r}" for e, m in series.points]
        atomic_write_text(args.csv, "\n".join(lines) + "\n")
    _emit(summary, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omniview",
        description="Person detection data toolkit for top-view omnidirectional images",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR or CRITICAL")
    parser.add_argument("--seed", type=int, help="Root seed for all randomness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="Assemble a split from annotation sources")
    p.add_argument("--manifest", required=True, help=f"Manifest file or bundled split ({', '.join(BUNDLED_SPLITS)})")
    p.add_argument("--source", action="append", metavar="NAME=PATH", help="Source directory of VOC XML or dataset file")
    p.add_argument("--class", dest="class_name", default="person", help="Object class to keep")
    p.add_argument("--output", required=True, help="Dataset file to write")
    p.add_argument("--stats", help="Write split statistics here instead of stdout")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("augment", help="Apply seeded augmentation chains to a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True, help="Output directory")
    p.add_argument("--policy", help="Augmentation policy JSON (default: SSD policy)")
    p.add_argument("--image-root", help="Directory image paths are relative to (default: dataset dir)")
    p.add_argument("--workers", type=int)
    p.set_defaults(handler=cmd_augment)

    p = sub.add_parser("synth", help="Render perspective images as virtual fisheye images")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True, help="Output directory")
    p.add_argument("--width", type=int, help="Output width (default: 640, or the input width with --quad)")
    p.add_argument("--height", type=int, help="Output height (default: 640, or the input height with --quad)")
    p.add_argument(
        "--quad",
        type=float,
        nargs=8,
        metavar="F",
        help="Four-point warp instead of a fisheye camera: destination of the image corners "
        "(TL, TR, BR, BL) as x y fractions of the output size",
    )
    p.add_argument("--fov", type=float, default=180.0, help="Fisheye field of view in degrees")
    p.add_argument("--focal", type=float, help="Fisheye focal length in pixels")
    p.add_argument("--cx", type=float)
    p.add_argument("--cy", type=float)
    p.add_argument("--roll", type=float, default=0.0)
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--camera-height", type=float, default=0.0, help="Mounting height in meters")
    p.add_argument("--source-focal", type=float, help="Source focal length (default: half the width)")
    p.add_argument("--samples-per-edge", type=int)
    p.add_argument("--image-root")
    p.add_argument("--workers", type=int)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("nms", help="Non-maximum suppression over a detection file")
    p.add_argument("--det", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--iou", type=float)
    p.add_argument("--score", type=float)
    p.set_defaults(handler=cmd_nms)

    p = sub.add_parser("eval", help="VOC-protocol evaluation of detections")
    p.add_argument("--gt", required=True, help="Ground-truth dataset file")
    p.add_argument("--det", required=True, help="Detections JSON-lines file")
    p.add_argument("--iou", type=float)
    p.add_argument("--mode", choices=sorted(MODE_ALIASES))
    p.add_argument("--epoch", type=int, help="Tag the report with a training epoch")
    p.add_argument("--output", help="Report file (default: stdout)")
    p.add_argument("--csv", help="Also write the PR curve as CSV")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bench", help="Measure per-image latency of a pipeline stage")
    p.add_argument("--stage", choices=STAGES, default="augment")
    p.add_argument("--warmup", type=int)
    p.add_argument("--repeat", type=int)
    p.add_argument("--overhead-ms", type=float)
    p.add_argument("--output")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("report", help="Best epoch over per-epoch evaluation reports")
    p.add_argument("reports", nargs="+", help="Evaluation report files")
    p.add_argument("--model", help="Compare with the reported result of this model")
    p.add_argument("--dataset", help="Training split of the reported result")
    p.add_argument("--fe-locked", action="store_true")
    p.add_argument("--output")
    p.add_argument("--csv")
    p.set_defaults(handler=cmd_report)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments and run one subcommand; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        if args.config:
            _require_file(args.config)
        config = load_config(args.config)
        if args.log_level:
            config.logging.log_level = args.log_level
        validate_config(config)
        setup_logging(config.logging.log_level)
        return args.handler(args, config)
    except (OmniviewError, OSError, ValueError) as e:
        message = format_error_message(e, f"omniview {args.command}")
        logger.debug(message, exc_info=True)
        print(message, file=sys.stderr)
        return 1


def main() -> None:
    """Console script entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
