"""Command-line entry point: ``occfusion fuse | eval | synth``.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
Diagnostics go to stderr; data goes to files (and the mAP to stdout).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from occfusion import io
from occfusion.config import ConfigError, PipelineConfig, load_config
from occfusion.errors import InvariantViolation
from occfusion.evaluation import EvaluationResult, evaluate
from occfusion.fusion import fuse_frame
from occfusion.model import FrameData, FusedObject
from occfusion.pfp import extract_objects
from occfusion.projection import CameraCalibration, project_cloud
from occfusion.synth import Unprojectable, generate, kitti_like_calibration, parse_scene_spec

log = logging.getLogger("occfusion")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


@dataclass
class RunReport:
    frames_processed: int = 0
    objects_emitted: int = 0
    discarded_regions: int = 0
    # fuse + feature extraction time per frame, milliseconds
    latency_ms: dict = field(default_factory=dict)

    @classmethod
    def from_latencies(cls, frames, objects, discarded, latencies) -> "RunReport":
        stats = {}
        if latencies:
            a = np.asarray(latencies)
            stats = {"min": float(a.min()), "median": float(np.median(a)),
                     "p99": float(np.percentile(a, 99)), "max": float(a.max())}
        return cls(frames, objects, discarded, stats)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def process_frame(frame: FrameData, calib: CameraCalibration) -> tuple[list[FusedObject], int, float]:
    """Project, fuse and extract one frame; returns objects, discarded regions and latency in ms."""
    cloud = project_cloud(frame, calib)
    t0 = time.perf_counter()
    assignments = fuse_frame(frame.detections, cloud)
    objects = extract_objects(assignments, frame.frame_id)
    latency = (time.perf_counter() - t0) * 1e3
    return objects, len(frame.detections) - len(assignments), latency


def run_frames(frames, calib, workers: int = 1):
    """Process frames on a pool; results come back in frame order."""
    if workers == 1:
        return [process_frame(f, calib) for f in frames]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda f: process_frame(f, calib), frames))


def _load(path: Path, parser, *args):
    try:
        return parser(path.read_text(encoding="utf-8"), *args)
    except io.ParseError as e:
        raise e.at(path)


def load_dataset(layout: io.DatasetLayout, config: PipelineConfig):
    calib = _load(Path(layout.calib_path), io.parse_calibration, config.ground_height)
    detections = _load(Path(layout.detections_path), io.parse_detections)
    points = _load(Path(layout.grid_path), io.parse_grid_points)
    return calib, io.group_frames(detections, points)


def cmd_fuse(layout: io.DatasetLayout, config: PipelineConfig,
             report_path: Optional[Path] = None) -> RunReport:
    calib, frames = load_dataset(layout, config)
    results = run_frames(frames, calib, config.workers)
    objects = [o for objs, _, _ in results for o in objs]
    Path(layout.output_path).write_text(io.write_fused_objects(objects), encoding="utf-8")
    report = RunReport.from_latencies(
        len(frames), len(objects), sum(d for _, d, _ in results), [t for _, _, t in results]
    )
    if report_path is not None:
        Path(report_path).write_text(report.to_json() + "\n", encoding="utf-8")
    return report


def cmd_eval(predictions_path, labels_path, config: PipelineConfig,
             report_path=None, pr_csv_path=None) -> EvaluationResult:
    preds = io.load_predictions(predictions_path)
    gts = io.load_labels(labels_path)
    result = evaluate(preds, gts, config.iou_threshold, config.cutoff_m, config.ap_method)
    if report_path is not None:
        Path(report_path).write_text(io.write_metrics_report(result), encoding="utf-8")
    if pr_csv_path is not None:
        Path(pr_csv_path).write_text(io.write_pr_csv(result), encoding="utf-8")
    return result


def cmd_synth(spec_path, calib_path, out_dir, config: PipelineConfig) -> list[Path]:
    """Write a synthetic dataset in the standard layout; returns the files written."""
    if calib_path is not None:
        calib = _load(Path(calib_path), io.parse_calibration, config.ground_height)
    else:
        calib = kitti_like_calibration(config.ground_height)
    spec = parse_scene_spec(Path(spec_path).read_text(encoding="utf-8"), calib)
    frames, truth, expected = generate(spec, calib)
    out = Path(out_dir)
    layout = io.DatasetLayout.in_directory(out)
    layout.labels_path.mkdir(parents=True, exist_ok=True)
    written = {
        layout.detections_path: io.write_detections((f.frame_id, b) for f in frames for b in f.detections),
        layout.grid_path: io.write_grid_points((f.frame_id, p) for f in frames for p in f.points),
        layout.calib_path: io.write_calibration(calib),
        out / "expected.jsonl": io.write_fused_objects(expected),
    }
    for f in frames:
        labels = [g for g in truth if g.frame_id == f.frame_id]
        written[layout.labels_path / f"{f.frame_id:06d}.txt"] = io.write_kitti_labels(labels, with_frame=False)
    for path, text in written.items():
        path.write_text(text, encoding="utf-8")
    return sorted(written)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value configuration file")
    p.add_argument("--calib", type=Path, help="KITTI calibration file")
    p.add_argument("--ground-height", type=float, help="z of the grid plane in the grid frame, metres")
    p.add_argument("--iou-threshold", type=float)
    p.add_argument("--cutoff-m", type=float, help="longitudinal evaluation range, metres")
    p.add_argument("--workers", type=int)
    p.add_argument("--output", type=Path)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occfusion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    fuse = sub.add_parser("fuse", help="fuse detections with projected grid points")
    _add_common(fuse)
    fuse.add_argument("--dataset", type=Path, help="directory in the synth layout")
    fuse.add_argument("--detections", type=Path)
    fuse.add_argument("--grid", type=Path)
    fuse.add_argument("--report", type=Path, help="run report (JSON); default <output>.report.json")

    ev = sub.add_parser("eval", help="evaluate predictions against KITTI-style labels")
    _add_common(ev)
    ev.add_argument("--predictions", type=Path, required=True)
    ev.add_argument("--labels", type=Path, required=True)
    ev.add_argument("--pr-csv", type=Path)
    ev.add_argument("--ap-method", choices=["all_points", "11_point"])

    syn = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(syn)
    syn.add_argument("--spec", type=Path, required=True, help="scene spec (JSON)")
    syn.add_argument("--out-dir", type=Path, required=True)
    return parser


def _config(args) -> PipelineConfig:
    return load_config(
        args.config,
        calib=args.calib,
        ground_height=args.ground_height,
        iou_threshold=args.iou_threshold,
        cutoff_m=args.cutoff_m,
        workers=args.workers,
        output=args.output,
        ap_method=getattr(args, "ap_method", None),
    )


def _run(args) -> int:
    config = _config(args)
    if args.command == "fuse":
        root = args.dataset
        detections = args.detections or (root / "detections.csv" if root else None)
        grid = args.grid or (root / "grid.csv" if root else None)
        calib = config.calib or (root / "calib.txt" if root else None)
        output = config.output or (root / "fused.jsonl" if root else None)
        missing = [n for n, v in (("--detections", detections), ("--grid", grid),
                                  ("--calib", calib), ("--output", output)) if v is None]
        if missing:
            log.error("missing %s (or --dataset)", ", ".join(missing))
            return EXIT_INPUT
        layout = io.DatasetLayout(detections, grid, None, calib, output)
        report_path = args.report or Path(str(output) + ".report.json")
        report = cmd_fuse(layout, config, report_path)
        lat = report.latency_ms
        log.info("%d frames, %d objects, %d discarded regions, median %.3f ms/frame",
                 report.frames_processed, report.objects_emitted, report.discarded_regions,
                 lat.get("median", 0.0))
    elif args.command == "eval":
        result = cmd_eval(args.predictions, args.labels, config, config.output, args.pr_csv)
        for p in result.label_mismatches:
            log.warning("label mismatch: %s in frame %d", p.class_label, p.frame_id)
        print(f"{result.mean_ap:.6f}")
    elif args.command == "synth":
        for path in cmd_synth(args.spec, config.calib, args.out_dir, config):
            log.info("wrote %s", path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return _run(args)
    except (io.ParseError, ConfigError, Unprojectable, OSError, json.JSONDecodeError) as e:
        log.error("%s", e)
        return EXIT_INPUT
    except InvariantViolation as e:
        log.error("internal invariant violated: %s", e)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
