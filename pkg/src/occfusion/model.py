"""Shared domain types.

Image coordinates have their origin at the top-left corner with y growing
downward. The occupancy-grid frame has x pointing forward (longitudinal) and
y pointing to the left.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from occfusion.errors import InvariantViolation


class MotionState(str, enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"

    @property
    def code(self) -> str:
        return "S" if self is MotionState.STATIC else "D"


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True, slots=True)
class BoundingBox2D:
    """A detector output. (x_min, y_min) is the top-left corner."""

    class_label: str
    confidence: float
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not _finite(self.confidence, self.x_min, self.y_min, self.x_max, self.y_max):
            raise InvariantViolation(f"non-finite value in box {self!r}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvariantViolation(f"degenerate box {self!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvariantViolation(f"confidence {self.confidence} outside [0, 1]")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True, slots=True)
class GridPoint:
    """One occupied occupancy-grid cell sample, in the vehicle frame."""

    x_o: float
    y_o: float
    vx_o: float
    vy_o: float
    state: MotionState

    def __post_init__(self):
        if not _finite(self.x_o, self.y_o, self.vx_o, self.vy_o):
            raise InvariantViolation(f"non-finite value in grid point {self!r}")
        if not isinstance(self.state, MotionState):
            raise InvariantViolation(f"unknown motion state {self.state!r}")
        if self.state is MotionState.STATIC and (self.vx_o != 0.0 or self.vy_o != 0.0):
            raise InvariantViolation("static grid point must have zero velocity")


@dataclass(frozen=True, slots=True)
class ProjectedPoint:
    """A grid point projected into the image; ``source`` keeps the grid data."""

    x_i: float
    y_i: float
    source: GridPoint

    def __post_init__(self):
        if not _finite(self.x_i, self.y_i):
            raise InvariantViolation("projected point must have finite pixel coordinates")


@dataclass(frozen=True, slots=True)
class FusionRegion:
    """Pixel band of full box width straddling the box bottom edge."""

    x_min: float
    x_max: float
    y_band_low: float
    y_band_high: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_band_low < self.y_band_high):
            raise InvariantViolation(f"empty fusion region {self!r}")


@dataclass(frozen=True, slots=True)
class FusedObject:
    class_label: str
    motion: MotionState
    position: tuple[float, float]
    velocity: tuple[float, float]
    heading: Optional[float]
    n_dynamic: int
    n_static: int
    source_box: BoundingBox2D
    frame_id: int
    # set when a dynamic vote had a zero median velocity and was demoted to static
    demoted: bool = False

    def __post_init__(self):
        if self.n_dynamic < 0 or self.n_static < 0 or self.n_dynamic + self.n_static < 1:
            raise InvariantViolation("fused object needs at least one supporting point")
        if self.frame_id < 0:
            raise InvariantViolation("frame_id must be non-negative")
        if self.motion is MotionState.STATIC:
            if tuple(self.velocity) != (0.0, 0.0) or self.heading is not None:
                raise InvariantViolation("static object must have zero velocity and no heading")
        else:
            if self.heading is None:
                raise InvariantViolation("dynamic object requires a heading")
            if not -math.pi < self.heading <= math.pi:
                raise InvariantViolation(f"heading {self.heading} outside (-pi, pi]")

    @property
    def evaluation_label(self) -> str:
        """Motion-prefixed class name, e.g. ``dynamicCar``."""
        return motion_label(self.motion, self.class_label)


def motion_label(motion: MotionState, class_label: str) -> str:
    if not class_label:
        return motion.value
    return motion.value + class_label[0].upper() + class_label[1:]


@dataclass(frozen=True)
class FrameData:
    frame_id: int
    detections: list[BoundingBox2D] = field(default_factory=list)
    points: list[GridPoint] = field(default_factory=list)

    def __post_init__(self):
        if self.frame_id < 0:
            raise InvariantViolation("frame_id must be non-negative")
