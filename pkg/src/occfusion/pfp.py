"""Point-wise feature processing: motion vote, median position/velocity, heading."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from occfusion.errors import OccFusionError
from occfusion.fusion import RegionAssignment
from occfusion.model import FusedObject, MotionState


class EmptyAssignment(OccFusionError, ValueError):
    pass


class EmptyInput(OccFusionError, ValueError):
    pass


class ZeroVelocity(OccFusionError, ValueError):
    pass


def estimate_motion(a: RegionAssignment) -> MotionState:
    """Majority vote over point states; a tie counts as dynamic."""
    nd, ns = a.n_dynamic, a.n_static
    if nd + ns == 0:
        raise EmptyAssignment("region assignment holds no points")
    return MotionState.DYNAMIC if nd >= ns else MotionState.STATIC


def _median_sorted(a: np.ndarray) -> float:
    n = len(a)
    m = n // 2
    return float(a[m]) if n % 2 else float((a[m - 1] + a[m]) / 2)


def median_2d(values) -> tuple[float, float]:
    """Component-wise median; even counts average the two middle values."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise EmptyInput("median of an empty set")
    arr = np.sort(arr.reshape(-1, 2), axis=0)
    return _median_sorted(arr[:, 0]), _median_sorted(arr[:, 1])


def _median_pair(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    return _median_sorted(np.sort(a)), _median_sorted(np.sort(b))


def heading(vx: float, vy: float) -> float:
    if vx == 0 and vy == 0:
        raise ZeroVelocity("heading undefined for zero velocity")
    h = math.atan2(vy, vx)
    # atan2(-0.0, negative) gives -pi; the range is half-open at -pi
    return math.pi if h == -math.pi else h


def extract_object(a: RegionAssignment, frame_id: int) -> FusedObject:
    motion = estimate_motion(a)
    cloud = a.cloud
    rows = a.dynamic_rows if motion is MotionState.DYNAMIC else a.static_rows
    position = _median_pair(cloud.x[rows], cloud.y[rows])
    velocity, head, demoted = (0.0, 0.0), None, False
    if motion is MotionState.DYNAMIC:
        velocity = _median_pair(cloud.vx[rows], cloud.vy[rows])
        if velocity[0] == 0 and velocity[1] == 0:
            motion, velocity, demoted = MotionState.STATIC, (0.0, 0.0), True
        else:
            head = heading(*velocity)
    return FusedObject(
        class_label=a.box.class_label,
        motion=motion,
        position=position,
        velocity=velocity,
        heading=head,
        n_dynamic=a.n_dynamic,
        n_static=a.n_static,
        source_box=a.box,
        frame_id=frame_id,
        demoted=demoted,
    )


def extract_objects(assignments: Sequence[RegionAssignment], frame_id: int) -> list[FusedObject]:
    return [extract_object(a, frame_id) for a in assignments]
