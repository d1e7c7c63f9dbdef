"""Synthetic scenes with known answers.

``generate`` fabricates detector boxes, occupancy-grid points and ground
truth for a scene, and computes the expected fused objects with a
deliberately naive oracle: scalar pinhole arithmetic, a double loop over
(box, point) pairs and ``statistics.median``. The oracle shares no code
with the projection/fusion/pfp modules it is used to check.
"""
from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from occfusion.errors import InvariantViolation, OccFusionError
from occfusion.evaluation import GroundTruthObject
from occfusion.model import (BoundingBox2D, FrameData, FusedObject, GridPoint, MotionState,
                             motion_label)
from occfusion.projection import CameraCalibration

BOX_MARGIN_PX = 2.0
IMAGE_MARGIN_PX = 1.0


class Unprojectable(OccFusionError):
    pass


@dataclass(frozen=True)
class SceneObject:
    class_label: str
    motion: MotionState
    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    points_per_object: int = 10
    length: float = 4.0
    width: float = 1.8
    height: float = 1.5

    def __post_init__(self):
        if self.points_per_object < 0:
            raise InvariantViolation("points_per_object must be >= 0")
        if self.motion is MotionState.STATIC and tuple(self.velocity) != (0.0, 0.0):
            raise InvariantViolation("static scene object must have zero velocity")
        if min(self.length, self.width, self.height) <= 0:
            raise InvariantViolation("object dimensions must be positive")


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    n_frames: int
    objects: Sequence[SceneObject] = field(default_factory=tuple)
    box_jitter_px: float = 0.0
    point_jitter_m: float = 0.0
    flip_prob: float = 0.0
    dt: float = 0.1

    def __post_init__(self):
        if self.n_frames < 0:
            raise InvariantViolation("n_frames must be >= 0")
        if self.box_jitter_px < 0 or self.point_jitter_m < 0:
            raise InvariantViolation("noise std-devs must be >= 0")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvariantViolation("flip_prob must be in [0, 1]")


class SynthScene(NamedTuple):
    frames: list[FrameData]
    ground_truth: list[GroundTruthObject]
    expected: list[FusedObject]


def kitti_like_calibration(ground_height: float = -1.73) -> CameraCalibration:
    """Camera looking along the grid's forward axis, KITTI-like intrinsics."""
    return CameraCalibration(
        intrinsics=[[721.5377, 0.0, 609.5593], [0.0, 721.5377, 172.854], [0.0, 0.0, 1.0]],
        rectification=np.eye(3),
        rotation=[[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]],
        translation=[0.0, -0.08, -0.27],
        image_width=1242,
        image_height=375,
        ground_height=ground_height,
    )


# -- oracle ------------------------------------------------------------------

def _matvec(m, v):
    return [m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] for r in range(3)]


def oracle_pixel(calib: CameraCalibration, x: float, y: float, z: float) -> Optional[tuple[float, float]]:
    """Scalar pinhole projection of a grid-frame 3D point; None if behind the camera."""
    rot, t, rect = calib.rotation.tolist(), calib.translation.tolist(), calib.rectification.tolist()
    c = _matvec(rot, [x, y, z])
    c = _matvec(rect, [c[0] + t[0], c[1] + t[1], c[2] + t[2]])
    if c[2] <= 1e-6:
        return None
    k = calib.intrinsics.tolist()
    return k[0][0] * c[0] / c[2] + k[0][2], k[1][1] * c[1] / c[2] + k[1][2]


def oracle_fuse(frame: FrameData, calib: CameraCalibration) -> list[FusedObject]:
    """Brute-force reference for projection + fusion + feature extraction."""
    projected = []
    for p in frame.points:
        px = oracle_pixel(calib, p.x_o, p.y_o, calib.ground_height)
        if px is None:
            continue
        u, v = px
        if 0 <= u < calib.image_width and 0 <= v < calib.image_height:
            projected.append((u, v, p))
    out = []
    for box in frame.detections:
        y_high = (5 * box.y_max - box.y_min) / 4
        y_low = (3 * box.y_max + box.y_min) / 4
        lo, hi = min(y_high, y_low), max(y_high, y_low)
        dyn, sta = [], []
        for u, v, p in projected:
            if box.x_min < u < box.x_max and lo < v < hi:
                (dyn if p.state is MotionState.DYNAMIC else sta).append(p)
        if not dyn and not sta:
            continue
        moving = len(dyn) >= len(sta)
        chosen = dyn if moving else sta
        position = (statistics.median(p.x_o for p in chosen), statistics.median(p.y_o for p in chosen))
        velocity, heading, demoted = (0.0, 0.0), None, False
        if moving:
            velocity = (statistics.median(p.vx_o for p in chosen), statistics.median(p.vy_o for p in chosen))
            if velocity == (0.0, 0.0):
                moving, demoted = False, True
            else:
                heading = math.atan2(velocity[1], velocity[0])
                if heading == -math.pi:
                    heading = math.pi
        out.append(FusedObject(
            class_label=box.class_label,
            motion=MotionState.DYNAMIC if moving else MotionState.STATIC,
            position=(float(position[0]), float(position[1])),
            velocity=(float(velocity[0]), float(velocity[1])) if moving else (0.0, 0.0),
            heading=heading,
            n_dynamic=len(dyn),
            n_static=len(sta),
            source_box=box,
            frame_id=frame.frame_id,
            demoted=demoted,
        ))
    return out


# -- generator ---------------------------------------------------------------

def _object_pixels(calib, pts, name):
    pix = []
    for x, y in pts:
        px = oracle_pixel(calib, x, y, calib.ground_height)
        if px is None:
            raise Unprojectable(f"{name}: point ({x:.2f}, {y:.2f}) is behind the camera")
        u, v = px
        if not (IMAGE_MARGIN_PX <= u < calib.image_width - IMAGE_MARGIN_PX
                and IMAGE_MARGIN_PX <= v < calib.image_height - IMAGE_MARGIN_PX):
            raise Unprojectable(f"{name}: point ({x:.2f}, {y:.2f}) projects outside the image")
        pix.append((u, v))
    return pix


def _box_for(calib, obj: SceneObject, center, pix, name) -> BoundingBox2D:
    us = [u for u, _ in pix]
    vs = [v for _, v in pix]
    y_max = (min(vs) + max(vs)) / 2
    half_spread = (max(vs) - min(vs)) / 2 + BOX_MARGIN_PX
    top = oracle_pixel(calib, center[0], center[1], calib.ground_height + obj.height)
    if top is None:
        raise Unprojectable(f"{name}: object top is behind the camera")
    # the box must be tall enough for its bottom band to hold every point
    y_min = min(top[1], y_max - 4 * half_spread)
    return BoundingBox2D(obj.class_label, 1.0, min(us) - BOX_MARGIN_PX, y_min,
                         max(us) + BOX_MARGIN_PX, y_max)


def _camera_depth(calib, x, y) -> float:
    c = _matvec(calib.rotation.tolist(), [x, y, calib.ground_height])
    t = calib.translation.tolist()
    c = _matvec(calib.rectification.tolist(), [c[0] + t[0], c[1] + t[1], c[2] + t[2]])
    return c[2]


def generate(spec: SceneSpec, calib: CameraCalibration) -> SynthScene:
    """Build frames, ground truth and oracle-computed expected objects for a scene."""
    rng = np.random.default_rng(spec.seed)
    frames, truth, expected = [], [], []
    for f in range(spec.n_frames):
        detections, points = [], []
        for k, obj in enumerate(spec.objects):
            name = f"object {k} ({obj.class_label}) in frame {f}"
            moving = obj.motion is MotionState.DYNAMIC
            cx = obj.position[0] + (obj.velocity[0] * f * spec.dt if moving else 0.0)
            cy = obj.position[1] + (obj.velocity[1] * f * spec.dt if moving else 0.0)
            n = obj.points_per_object
            offs = rng.uniform(-0.5, 0.5, size=(n, 2)) * (obj.length, obj.width)
            jitter = rng.normal(0.0, spec.point_jitter_m, size=(n, 2)) if spec.point_jitter_m else np.zeros((n, 2))
            flips = rng.random(n) < spec.flip_prob
            spurious = rng.normal(0.0, 0.5, size=(n, 2))
            obj_pts = []
            for i in range(n):
                x = float(cx + offs[i, 0] + jitter[i, 0])
                y = float(cy + offs[i, 1] + jitter[i, 1])
                is_dyn = moving != bool(flips[i])
                if not is_dyn:
                    vx = vy = 0.0
                elif moving:
                    vx, vy = float(obj.velocity[0]), float(obj.velocity[1])
                else:
                    vx, vy = float(spurious[i, 0]), float(spurious[i, 1])
                obj_pts.append(GridPoint(x, y, vx, vy,
                                         MotionState.DYNAMIC if is_dyn else MotionState.STATIC))
            if n == 0:
                continue
            pix = _object_pixels(calib, [(p.x_o, p.y_o) for p in obj_pts], name)
            clean = _box_for(calib, obj, (cx, cy), pix, name)
            conf = float(rng.uniform(0.5, 1.0))
            corners = [clean.x_min, clean.y_min, clean.x_max, clean.y_max]
            if spec.box_jitter_px:
                corners = [c + float(d) for c, d in zip(corners, rng.normal(0.0, spec.box_jitter_px, 4))]
            x0, x1 = sorted(corners[0::2])
            y0, y1 = sorted(corners[1::2])
            if x0 < x1 and y0 < y1:
                detections.append(BoundingBox2D(obj.class_label, conf, x0, y0, x1, y1))
            truth.append(GroundTruthObject(
                f, motion_label(obj.motion, obj.class_label),
                BoundingBox2D(motion_label(obj.motion, obj.class_label), 1.0,
                              clean.x_min, clean.y_min, clean.x_max, clean.y_max),
                _camera_depth(calib, cx, cy),
            ))
            points.extend(obj_pts)
        order = rng.permutation(len(points))
        frame = FrameData(f, detections, [points[i] for i in order])
        frames.append(frame)
        expected.extend(oracle_fuse(frame, calib))
    return SynthScene(frames, truth, expected)


def _x_interval(frame_boxes):
    return sorted((b.x_min, b.x_max) for b in frame_boxes)


def random_scene_spec(seed: int, calib: CameraCalibration, n_frames: int = 3,
                      max_objects: int = 4, max_tries: int = 200, **noise) -> SceneSpec:
    """A random scene whose boxes never overlap horizontally in any frame.

    Objects stay between 8 m and 25 m ahead so the KITTI-like camera sees them
    and they stay inside the default 30 m evaluation range.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        objects = []
        for _ in range(int(rng.integers(1, max_objects + 1))):
            moving = bool(rng.random() < 0.5)
            objects.append(SceneObject(
                class_label=str(rng.choice(["car", "van"])),
                motion=MotionState.DYNAMIC if moving else MotionState.STATIC,
                position=(float(rng.uniform(8.0, 25.0)), float(rng.uniform(-6.0, 6.0))),
                velocity=(float(rng.uniform(-3.0, 8.0)), float(rng.uniform(-1.0, 1.0))) if moving else (0.0, 0.0),
                points_per_object=int(rng.integers(1, 30)),
            ))
        spec = SceneSpec(seed=seed, n_frames=n_frames, objects=tuple(objects), **noise)
        try:
            scene = generate(spec, calib)
        except Unprojectable:
            continue
        by_frame: dict[int, list] = {}
        for g in scene.ground_truth:
            by_frame.setdefault(g.frame_id, []).append(g.box)
        ok = all(a[1] < b[0] for boxes in by_frame.values()
                 for a, b in zip(_x_interval(boxes), _x_interval(boxes)[1:]))
        if ok:
            return spec
    raise RuntimeError(f"no non-overlapping scene found for seed {seed}")


# -- spec files ----------------------------------------------------------------

def parse_scene_spec(text: str, calib: Optional[CameraCalibration] = None) -> SceneSpec:
    """Scene spec from JSON.

    Either list ``objects`` explicitly or give ``random_objects: true`` (needs
    ``calib``) to draw a non-overlapping random scene from the seed.
    """
    raw = json.loads(text)
    noise = raw.get("noise", {})
    kwargs = dict(
        box_jitter_px=float(noise.get("box_px", 0.0)),
        point_jitter_m=float(noise.get("point_m", 0.0)),
        flip_prob=float(noise.get("flip_prob", 0.0)),
    )
    seed = int(raw["seed"])
    n_frames = int(raw.get("n_frames", 1))
    if raw.get("random_objects"):
        if calib is None:
            raise ValueError("random_objects needs a calibration")
        return random_scene_spec(seed, calib, n_frames=n_frames,
                                 max_objects=int(raw.get("max_objects", 4)), **kwargs)
    objects = tuple(
        SceneObject(
            class_label=o["class"],
            motion=MotionState(o["motion"]),
            position=tuple(map(float, o["position"])),
            velocity=tuple(map(float, o.get("velocity", (0.0, 0.0)))),
            points_per_object=int(o.get("points", 10)),
            length=float(o.get("length", 4.0)),
            width=float(o.get("width", 1.8)),
            height=float(o.get("height", 1.5)),
        )
        for o in raw.get("objects", [])
    )
    return SceneSpec(seed=seed, n_frames=n_frames, objects=objects,
                     dt=float(raw.get("dt", 0.1)), **kwargs)
