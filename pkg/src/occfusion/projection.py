"""Occupancy grid -> image plane projection (rigid transform + pinhole)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from occfusion.errors import InvariantViolation, OccFusionError
from occfusion.model import FrameData, GridPoint, MotionState, ProjectedPoint

EPSILON_Z = 1e-6
ROTATION_TOL = 1e-6


class BehindCamera(OccFusionError):
    """The point lies at or behind the camera plane and cannot be projected."""


def _check_rotation(name: str, r: np.ndarray) -> None:
    if r.shape != (3, 3):
        raise InvariantViolation(f"{name} must be 3x3, got {r.shape}")
    if not np.allclose(r @ r.T, np.eye(3), rtol=0.0, atol=ROTATION_TOL):
        raise InvariantViolation(f"{name} is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
        raise InvariantViolation(f"{name} must have determinant +1")


def _frozen(a, shape) -> np.ndarray:
    a = np.array(a, dtype=float).reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CameraCalibration:
    intrinsics: np.ndarray
    rectification: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_width: int
    image_height: int
    ground_height: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "intrinsics", _frozen(self.intrinsics, (3, 3)))
        object.__setattr__(self, "rectification", _frozen(self.rectification, (3, 3)))
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))
        k = self.intrinsics
        if not (k[0, 0] > 0 and k[1, 1] > 0):
            raise InvariantViolation("focal lengths must be positive")
        if k[0, 1] != 0 or k[1, 0] != 0 or k[2, 0] != 0 or k[2, 1] != 0 or k[2, 2] != 1:
            raise InvariantViolation("intrinsics must be a zero-skew pinhole matrix")
        _check_rotation("rectification", self.rectification)
        _check_rotation("grid_to_camera rotation", self.rotation)
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvariantViolation("image size must be positive")
        if not np.isfinite(self.ground_height):
            raise InvariantViolation("ground_height must be finite")

    @property
    def fx(self) -> float:
        return float(self.intrinsics[0, 0])

    @property
    def fy(self) -> float:
        return float(self.intrinsics[1, 1])

    @property
    def cx(self) -> float:
        return float(self.intrinsics[0, 2])

    @property
    def cy(self) -> float:
        return float(self.intrinsics[1, 2])

    def with_ground_height(self, ground_height: float) -> "CameraCalibration":
        return CameraCalibration(
            self.intrinsics, self.rectification, self.rotation, self.translation,
            self.image_width, self.image_height, ground_height,
        )

    @classmethod
    def identity(cls, width: int = 1280, height: int = 720, ground_height: float = 0.0):
        return cls(np.eye(3), np.eye(3), np.eye(3), np.zeros(3), width, height, ground_height)


def lift_grid_point(p: GridPoint, calib: CameraCalibration) -> np.ndarray:
    """Place a planar grid point at ``ground_height`` and express it in the rectified camera frame."""
    grid = np.array([p.x_o, p.y_o, calib.ground_height])
    return calib.rectification @ (calib.rotation @ grid + calib.translation)


def project_point(p3, calib: CameraCalibration, source: Optional[GridPoint] = None) -> ProjectedPoint:
    X, Y, Z = (float(c) for c in p3)
    if Z <= EPSILON_Z:
        raise BehindCamera(f"depth {Z} <= {EPSILON_Z}")
    if source is None:
        source = GridPoint(X, Y, 0.0, 0.0, MotionState.STATIC)
    return ProjectedPoint(calib.fx * X / Z + calib.cx, calib.fy * Y / Z + calib.cy, source)


def back_project(u: float, v: float, depth: float, calib: CameraCalibration) -> np.ndarray:
    """Camera-frame point on the pixel ray through (u, v) at the given depth."""
    return np.array([(u - calib.cx) * depth / calib.fx, (v - calib.cy) * depth / calib.fy, depth])


@dataclass(frozen=True, eq=False)
class ProjectedCloud:
    """Struct-of-arrays view of the projected points of one frame.

    ``index`` maps each row back to the position of its grid point in the
    frame's input list.
    """

    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    dynamic: np.ndarray
    index: np.ndarray
    sources: Optional[Sequence[GridPoint]] = None

    def __len__(self) -> int:
        return len(self.u)

    def point(self, row: int) -> ProjectedPoint:
        if self.sources is not None:
            src = self.sources[int(self.index[row])]
        else:
            state = MotionState.DYNAMIC if self.dynamic[row] else MotionState.STATIC
            src = GridPoint(float(self.x[row]), float(self.y[row]),
                            float(self.vx[row]), float(self.vy[row]), state)
        return ProjectedPoint(float(self.u[row]), float(self.v[row]), src)

    def points(self, rows=None) -> list[ProjectedPoint]:
        if rows is None:
            rows = range(len(self))
        return [self.point(r) for r in rows]

    @classmethod
    def from_points(cls, points: Sequence[ProjectedPoint]) -> "ProjectedCloud":
        n = len(points)
        data = np.empty((6, n))
        for i, p in enumerate(points):
            s = p.source
            data[:, i] = (p.x_i, p.y_i, s.x_o, s.y_o, s.vx_o, s.vy_o)
        dynamic = np.fromiter((p.source.state is MotionState.DYNAMIC for p in points), bool, n)
        return cls(*data, dynamic=dynamic, index=np.arange(n),
                   sources=[p.source for p in points])


def grid_arrays(points: Sequence[GridPoint]) -> tuple[np.ndarray, np.ndarray]:
    """Return an (n, 4) array of x, y, vx, vy and a boolean dynamic mask."""
    n = len(points)
    xyv = np.fromiter(
        (c for p in points for c in (p.x_o, p.y_o, p.vx_o, p.vy_o)), float, 4 * n
    ).reshape(n, 4)
    dynamic = np.fromiter((p.state is MotionState.DYNAMIC for p in points), bool, n)
    return xyv, dynamic


def project_arrays(xyv: np.ndarray, dynamic: np.ndarray, calib: CameraCalibration,
                   sources: Optional[Sequence[GridPoint]] = None) -> ProjectedCloud:
    """Vectorised projection; keeps points in front of the camera and inside the image."""
    n = len(xyv)
    grid = np.column_stack([xyv[:, 0], xyv[:, 1], np.full(n, calib.ground_height)])
    cam = (grid @ calib.rotation.T + calib.translation) @ calib.rectification.T
    Z = cam[:, 2]
    front = Z > EPSILON_Z
    safe_z = np.where(front, Z, 1.0)
    u = calib.fx * cam[:, 0] / safe_z + calib.cx
    v = calib.fy * cam[:, 1] / safe_z + calib.cy
    keep = (front & (u >= 0) & (u < calib.image_width)
            & (v >= 0) & (v < calib.image_height))
    idx = np.flatnonzero(keep)
    return ProjectedCloud(
        u=u[idx], v=v[idx],
        x=xyv[idx, 0], y=xyv[idx, 1], vx=xyv[idx, 2], vy=xyv[idx, 3],
        dynamic=dynamic[idx], index=idx, sources=sources,
    )


def project_cloud(frame: FrameData, calib: CameraCalibration) -> ProjectedCloud:
    xyv, dynamic = grid_arrays(frame.points)
    return project_arrays(xyv, dynamic, calib, sources=frame.points)


def project_frame(frame: FrameData, calib: CameraCalibration) -> list[ProjectedPoint]:
    """Project every grid point of a frame; points behind the camera or off-image are dropped."""
    return project_cloud(frame, calib).points()
