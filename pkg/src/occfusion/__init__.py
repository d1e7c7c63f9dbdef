"""Camera / occupancy-grid late fusion for static and dynamic object detection."""
from occfusion.model import (BoundingBox2D, FrameData, FusedObject, FusionRegion, GridPoint,
                             MotionState, ProjectedPoint)

__all__ = ["BoundingBox2D", "FrameData", "FusedObject", "FusionRegion", "GridPoint",
           "MotionState", "ProjectedPoint"]
