"""Fusion regions and per-box partitioning of projected grid points."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from occfusion.errors import InvariantViolation
from occfusion.model import BoundingBox2D, FusionRegion, MotionState, ProjectedPoint
from occfusion.projection import ProjectedCloud


def fusion_region(box: BoundingBox2D) -> FusionRegion:
    """Band spanning the box width, half the box height tall, centred on the bottom edge."""
    y_high = (5.0 * box.y_max - box.y_min) / 4.0
    y_low = (3.0 * box.y_max + box.y_min) / 4.0
    # y grows downward, so y_high is numerically larger than y_low; the band lies between them
    return FusionRegion(box.x_min, box.x_max, min(y_low, y_high), max(y_low, y_high))


def point_in_region(region: FusionRegion, p: ProjectedPoint) -> bool:
    return (region.x_min < p.x_i < region.x_max
            and region.y_band_low < p.y_i < region.y_band_high)


@dataclass(frozen=True, eq=False)
class RegionAssignment:
    """Points of one frame falling inside one detection's fusion region.

    Row indices refer to ``cloud``; both index arrays are ascending, so input
    order is preserved.
    """

    box: BoundingBox2D
    region: FusionRegion
    cloud: ProjectedCloud
    dynamic_rows: np.ndarray
    static_rows: np.ndarray

    @property
    def n_dynamic(self) -> int:
        return len(self.dynamic_rows)

    @property
    def n_static(self) -> int:
        return len(self.static_rows)

    @property
    def dynamic_points(self) -> list[ProjectedPoint]:
        return self.cloud.points(self.dynamic_rows)

    @property
    def static_points(self) -> list[ProjectedPoint]:
        return self.cloud.points(self.static_rows)

    @classmethod
    def from_points(cls, box: BoundingBox2D, dynamic_points: Sequence[ProjectedPoint],
                    static_points: Sequence[ProjectedPoint], check: bool = True):
        region = fusion_region(box)
        if check:
            for p in dynamic_points:
                if p.source.state is not MotionState.DYNAMIC:
                    raise InvariantViolation("static point in dynamic set")
            for p in static_points:
                if p.source.state is not MotionState.STATIC:
                    raise InvariantViolation("dynamic point in static set")
            for p in (*dynamic_points, *static_points):
                if not point_in_region(region, p):
                    raise InvariantViolation(f"point ({p.x_i}, {p.y_i}) outside fusion region")
        cloud = ProjectedCloud.from_points([*dynamic_points, *static_points])
        nd = len(dynamic_points)
        return cls(box, region, cloud, np.arange(nd), np.arange(nd, len(cloud)))


class _SortedCloud:
    """Points sorted by image column so each box only scans its own x-range."""

    def __init__(self, cloud: ProjectedCloud):
        self.cloud = cloud
        self.order = np.argsort(cloud.u)
        self.u = cloud.u[self.order]
        self.v = cloud.v[self.order]

    def rows_in(self, region: FusionRegion) -> np.ndarray:
        lo = np.searchsorted(self.u, region.x_min, side="right")
        hi = np.searchsorted(self.u, region.x_max, side="left")
        v = self.v[lo:hi]
        hit = (v > region.y_band_low) & (v < region.y_band_high)
        rows = self.order[lo:hi][hit]
        rows.sort()
        return rows


def fuse_frame(detections: Sequence[BoundingBox2D],
               points: Union[ProjectedCloud, Sequence[ProjectedPoint]]) -> list[RegionAssignment]:
    """Assign projected points to every detection whose fusion region contains them.

    Detections with an empty region are dropped. A point inside several
    overlapping regions is shared by all of them.
    """
    cloud = points if isinstance(points, ProjectedCloud) else ProjectedCloud.from_points(points)
    if not detections or len(cloud) == 0:
        return []
    index = _SortedCloud(cloud)
    out = []
    for box in detections:
        region = fusion_region(box)
        rows = index.rows_in(region)
        if len(rows) == 0:
            continue
        dyn = cloud.dynamic[rows]
        out.append(RegionAssignment(box, region, cloud, rows[dyn], rows[~dyn]))
    return out

