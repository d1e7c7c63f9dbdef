"""Readers and writers for every file format the pipeline touches.

Formats
-------
calibration   KITTI ``KEY: v1 v2 ...`` lines; needs P2, R0_rect, Tr_velo_to_cam.
detections    CSV ``frame_id,class,confidence,x_min,y_min,x_max,y_max``.
grid points   CSV ``frame_id,x_o,y_o,vx_o,vy_o,S|D``.
labels        KITTI label lines (type, truncated, occluded, alpha, 2D box, dims,
              location, rotation_y[, score]). Either a directory with one
              ``<frame>.txt`` per frame or a single file whose lines carry the
              frame id as an extra first column.
fused objects one JSON object per line, numbers with 6 decimals.

Detection/grid CSVs skip blank lines and lines starting with ``#``. Only
plain decimal numbers are accepted (no ``nan``, ``inf``, ``1_0`` or ``,`` as
a decimal separator).
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from occfusion.errors import InvariantViolation, OccFusionError
from occfusion.evaluation import EvaluationResult, GroundTruthObject, Prediction
from occfusion.model import BoundingBox2D, FrameData, FusedObject, GridPoint, MotionState
from occfusion.projection import CameraCalibration

_FLOAT = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_INT = re.compile(r"[+-]?\d+")


class ParseError(OccFusionError):
    def __init__(self, message: str, line: Optional[int] = None, path=None):
        self.message = message
        self.line = line
        self.path = path
        super().__init__(message)

    def __str__(self):
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if self.line is not None:
            where.append(f"line {self.line}")
        return f"{':'.join(where)}: {self.message}" if where else self.message

    def at(self, path) -> "ParseError":
        self.path = path
        return self


class MissingKey(ParseError):
    def __init__(self, name: str):
        super().__init__(f"missing key {name!r}")
        self.name = name


class MalformedNumber(ParseError):
    def __init__(self, token: str, line: int, column: int):
        super().__init__(f"malformed number {token!r} at column {column}", line)
        self.token = token
        self.column = column


class WrongArity(ParseError):
    def __init__(self, key: str, expected: int, got: int, line: Optional[int] = None):
        super().__init__(f"{key}: expected {expected} values, got {got}", line)
        self.key, self.expected, self.got = key, expected, got


class MalformedRecord(ParseError):
    pass


class RecordInvariantViolation(ParseError):
    pass


class StaticWithVelocity(ParseError):
    pass


def parse_float(token: str, line: int = 0, column: int = 0) -> float:
    token = token.strip()
    if not _FLOAT.fullmatch(token):
        raise MalformedNumber(token, line, column)
    return float(token)


def _parse_int(token: str, line: int, what: str = "frame_id") -> int:
    token = token.strip()
    if not _INT.fullmatch(token) or int(token) < 0:
        raise MalformedRecord(f"bad {what} {token!r}", line)
    return int(token)


def _data_lines(text: str):
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield n, line


# -- calibration -------------------------------------------------------------

_CALIB_ARITY = {"P2": 12, "R0_rect": 9, "Tr_velo_to_cam": 12}


def parse_calibration(text: str, ground_height: float = 0.0,
                      image_size: tuple[int, int] = (1242, 375)) -> CameraCalibration:
    """Build a calibration from a KITTI calib file.

    Intrinsics come from the left 3x3 block of P2. Image size is not part of
    the KITTI file; an optional ``image_size: W H`` line overrides the default.
    """
    values: dict[str, np.ndarray] = {}
    lines: dict[str, int] = {}
    for n, line in _data_lines(text):
        if ":" not in line:
            raise MalformedRecord(f"expected 'KEY: values', got {line!r}", n)
        key, rest = line.split(":", 1)
        key = key.strip()
        if key not in _CALIB_ARITY and key != "image_size":
            continue
        tokens = rest.split()
        offset = len(key) + 2
        nums = []
        for tok in tokens:
            col = line.index(tok, offset) + 1
            offset = col - 1 + len(tok)
            nums.append(parse_float(tok, n, col))
        values[key] = np.array(nums)
        lines[key] = n
    for key, arity in _CALIB_ARITY.items():
        if key not in values:
            raise MissingKey(key)
        if len(values[key]) != arity:
            raise WrongArity(key, arity, len(values[key]), lines[key])
    if "image_size" in values:
        size = values["image_size"]
        if len(size) != 2:
            raise WrongArity("image_size", 2, len(size), lines["image_size"])
        image_size = (int(size[0]), int(size[1]))
    p2 = values["P2"].reshape(3, 4)
    tr = values["Tr_velo_to_cam"].reshape(3, 4)
    try:
        return CameraCalibration(
            intrinsics=p2[:, :3],
            rectification=values["R0_rect"].reshape(3, 3),
            rotation=tr[:, :3],
            translation=tr[:, 3],
            image_width=image_size[0],
            image_height=image_size[1],
            ground_height=ground_height,
        )
    except InvariantViolation as e:
        raise RecordInvariantViolation(f"invalid calibration: {e}") from e


def write_calibration(calib: CameraCalibration) -> str:
    p2 = np.hstack([calib.intrinsics, np.zeros((3, 1))])
    tr = np.hstack([calib.rotation, calib.translation.reshape(3, 1)])

    def row(key, m):
        return key + ": " + " ".join(repr(float(v)) for v in np.ravel(m))

    return "\n".join([
        row("P2", p2),
        row("R0_rect", calib.rectification),
        row("Tr_velo_to_cam", tr),
        f"image_size: {calib.image_width} {calib.image_height}",
    ]) + "\n"


# -- detections and grid points ---------------------------------------------

def _fields(line: str, n: int, count: int) -> list[str]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != count:
        raise MalformedRecord(f"expected {count} fields, got {len(parts)}", n)
    return parts


def _floats(parts: Sequence[str], n: int) -> list[float]:
    try:
        return [parse_float(p, n) for p in parts]
    except MalformedNumber as e:
        raise MalformedRecord(f"malformed number {e.token!r}", n) from None


def parse_detections(text: str) -> list[tuple[int, BoundingBox2D]]:
    out = []
    for n, line in _data_lines(text):
        parts = _fields(line, n, 7)
        frame = _parse_int(parts[0], n)
        if not parts[1]:
            raise MalformedRecord("empty class label", n)
        conf, x0, y0, x1, y1 = _floats(parts[2:], n)
        try:
            box = BoundingBox2D(parts[1], conf, x0, y0, x1, y1)
        except InvariantViolation as e:
            raise RecordInvariantViolation(str(e), n) from None
        out.append((frame, box))
    return out


def write_detections(records: Iterable[tuple[int, BoundingBox2D]]) -> str:
    lines = ["# frame_id,class,confidence,x_min,y_min,x_max,y_max"]
    for frame, b in records:
        lines.append(",".join([str(frame), b.class_label]
                              + [repr(float(v)) for v in (b.confidence, b.x_min, b.y_min, b.x_max, b.y_max)]))
    return "\n".join(lines) + "\n"


def parse_grid_points(text: str) -> list[tuple[int, GridPoint]]:
    out = []
    for n, line in _data_lines(text):
        parts = _fields(line, n, 6)
        frame = _parse_int(parts[0], n)
        x, y, vx, vy = _floats(parts[1:5], n)
        if parts[5] == "S":
            if vx != 0.0 or vy != 0.0:
                raise StaticWithVelocity("static point with nonzero velocity", n)
            state = MotionState.STATIC
        elif parts[5] == "D":
            state = MotionState.DYNAMIC
        else:
            raise MalformedRecord(f"state must be S or D, got {parts[5]!r}", n)
        out.append((frame, GridPoint(x, y, vx, vy, state)))
    return out


def write_grid_points(records: Iterable[tuple[int, GridPoint]]) -> str:
    lines = ["# frame_id,x_o,y_o,vx_o,vy_o,state"]
    for frame, p in records:
        lines.append(",".join([str(frame)] + [repr(float(v)) for v in (p.x_o, p.y_o, p.vx_o, p.vy_o)]
                              + [p.state.code]))
    return "\n".join(lines) + "\n"


def group_frames(detections: Sequence[tuple[int, BoundingBox2D]],
                 points: Sequence[tuple[int, GridPoint]]) -> list[FrameData]:
    """Collect records into frames, ordered by frame id."""
    dets: dict[int, list] = {}
    pts: dict[int, list] = {}
    for f, b in detections:
        dets.setdefault(f, []).append(b)
    for f, p in points:
        pts.setdefault(f, []).append(p)
    return [FrameData(f, dets.get(f, []), pts.get(f, [])) for f in sorted(set(dets) | set(pts))]


# -- ground truth labels -----------------------------------------------------

def parse_kitti_labels(text: str, frame_id: Optional[int] = None,
                       with_score: bool = False) -> list[GroundTruthObject]:
    """Parse KITTI label lines.

    With ``frame_id=None`` every line starts with an extra frame id column.
    ``DontCare`` entries are skipped. The longitudinal distance is the
    camera-frame z of the 3D location when present.
    """
    out = []
    for n, line in _data_lines(text):
        cols = line.split()
        if frame_id is None:
            if not cols:
                continue
            frame, cols = _parse_int(cols[0], n), cols[1:]
        else:
            frame = frame_id
        if len(cols) < 8:
            raise MalformedRecord(f"KITTI label needs at least 8 columns, got {len(cols)}", n)
        label = cols[0]
        if label == "DontCare":
            continue
        x0, y0, x1, y1 = _floats(cols[4:8], n)
        distance = _floats([cols[13]], n)[0] if len(cols) >= 14 else None
        score = 1.0
        if with_score and len(cols) >= 16:
            score = _floats([cols[15]], n)[0]
        try:
            box = BoundingBox2D(label, score, x0, y0, x1, y1)
        except InvariantViolation as e:
            raise RecordInvariantViolation(str(e), n) from None
        out.append(GroundTruthObject(frame, label, box, distance))
    return out


def write_kitti_labels(objects: Iterable[GroundTruthObject], with_frame: bool = True) -> str:
    lines = []
    for g in objects:
        b = g.box
        z = g.longitudinal_distance if g.longitudinal_distance is not None else -1000.0
        cols = [g.class_label, "0.00", "0", "0.00"] + [repr(float(v)) for v in (b.x_min, b.y_min, b.x_max, b.y_max)]
        cols += ["0.00", "0.00", "0.00", "0.00", "0.00", repr(float(z)), "0.00"]
        if with_frame:
            cols.insert(0, str(g.frame_id))
        lines.append(" ".join(cols))
    return "\n".join(lines) + ("\n" if lines else "")


def _read(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def load_labels(path, with_score: bool = False) -> list[GroundTruthObject]:
    path = Path(path)
    if path.is_dir():
        out = []
        for f in sorted(path.glob("*.txt")):
            if not f.stem.isdigit():
                continue
            try:
                out.extend(parse_kitti_labels(_read(f), int(f.stem), with_score))
            except ParseError as e:
                raise e.at(f)
        return out
    try:
        return parse_kitti_labels(_read(path), None, with_score)
    except ParseError as e:
        raise e.at(path)


# -- fused object output -----------------------------------------------------

def _num(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _box_json(b: BoundingBox2D) -> str:
    return (f'{{"class": {json.dumps(b.class_label)}, "confidence": {_num(b.confidence)}, '
            f'"x_min": {_num(b.x_min)}, "y_min": {_num(b.y_min)}, '
            f'"x_max": {_num(b.x_max)}, "y_max": {_num(b.y_max)}}}')


def fused_object_line(o: FusedObject) -> str:
    parts = [
        f'"frame_id": {o.frame_id}',
        f'"class": {json.dumps(o.class_label)}',
        f'"motion": "{o.motion.value}"',
        f'"x": {_num(o.position[0])}',
        f'"y": {_num(o.position[1])}',
        f'"vx": {_num(o.velocity[0])}',
        f'"vy": {_num(o.velocity[1])}',
    ]
    if o.heading is not None:
        parts.append(f'"heading": {_num(o.heading)}')
    parts += [
        f'"n_dynamic": {o.n_dynamic}',
        f'"n_static": {o.n_static}',
        f'"demoted": {"true" if o.demoted else "false"}',
        f'"box": {_box_json(o.source_box)}',
    ]
    return "{" + ", ".join(parts) + "}"


def write_fused_objects(objects: Iterable[FusedObject]) -> str:
    return "".join(fused_object_line(o) + "\n" for o in objects)


def _clamp_heading(h: float) -> float:
    # 6-decimal rounding can push a heading just past +-pi
    if h > math.pi:
        return math.pi
    if h <= -math.pi:
        return math.nextafter(-math.pi, 0.0)
    return h


def parse_fused_objects(text: str) -> list[FusedObject]:
    out = []
    for n, line in _data_lines(text):
        try:
            rec = json.loads(line)
            b = rec["box"]
            box = BoundingBox2D(b["class"], float(b["confidence"]), float(b["x_min"]),
                                float(b["y_min"]), float(b["x_max"]), float(b["y_max"]))
            heading = rec.get("heading")
            out.append(FusedObject(
                class_label=rec["class"],
                motion=MotionState(rec["motion"]),
                position=(float(rec["x"]), float(rec["y"])),
                velocity=(float(rec["vx"]), float(rec["vy"])),
                heading=None if heading is None else _clamp_heading(float(heading)),
                n_dynamic=int(rec["n_dynamic"]),
                n_static=int(rec["n_static"]),
                source_box=box,
                frame_id=int(rec["frame_id"]),
                demoted=bool(rec.get("demoted", False)),
            ))
        except InvariantViolation as e:
            raise RecordInvariantViolation(str(e), n) from None
        except (ValueError, KeyError, TypeError) as e:
            raise MalformedRecord(f"bad fused-object record: {e}", n) from None
    return out


def load_predictions(path) -> list[Prediction]:
    """Predictions from fused-object output (``.jsonl``) or KITTI labels with scores."""
    path = Path(path)
    if path.is_file() and path.suffix in (".jsonl", ".json"):
        try:
            return [Prediction.from_fused(o) for o in parse_fused_objects(_read(path))]
        except ParseError as e:
            raise e.at(path)
    return [Prediction(g.frame_id, g.class_label, g.box, g.longitudinal_distance)
            for g in load_labels(path, with_score=True)]


# -- evaluation reports ------------------------------------------------------

def write_metrics_report(result: EvaluationResult) -> str:
    lines = []
    for label in sorted(result.per_class):
        m = result.per_class[label]
        lines.append(
            f'{{"class": {json.dumps(label)}, "precision": {_num(m.precision)}, '
            f'"recall": {_num(m.recall)}, "f1": {_num(m.f1)}, "ap": {_num(m.ap)}, '
            f'"tp": {m.tp}, "fp": {m.fp}, "fn": {m.fn}}}'
        )
    lines.append(f'{{"mAP": {_num(result.mean_ap)}, "label_mismatches": {len(result.label_mismatches)}}}')
    return "\n".join(lines) + "\n"


def write_pr_csv(result: EvaluationResult) -> str:
    lines = ["class,confidence,recall,precision"]
    for label in sorted(result.curves):
        c = result.curves[label]
        for conf, r, p in zip(c.confidence, c.recall, c.precision):
            lines.append(f"{label},{_num(conf)},{_num(r)},{_num(p)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DatasetLayout:
    detections_path: Path
    grid_path: Path
    labels_path: Optional[Path]
    calib_path: Path
    output_path: Path

    def __post_init__(self):
        for name in ("detections_path", "grid_path", "calib_path", "output_path"):
            if not str(getattr(self, name) or ""):
                raise InvariantViolation(f"{name} must be non-empty")

    @classmethod
    def in_directory(cls, root, output_path=None) -> "DatasetLayout":
        """Conventional file names inside one directory, as written by the synth command."""
        root = Path(root)
        return cls(root / "detections.csv", root / "grid.csv", root / "labels",
                   root / "calib.txt", Path(output_path) if output_path else root / "fused.jsonl")
