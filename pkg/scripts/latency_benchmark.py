"""Per-frame fuse + feature-extraction latency for dense synthetic frames.

    python scripts/latency_benchmark.py --boxes 50 --points 10000 --frames 50
"""
import argparse
import time

import numpy as np

from occfusion.fusion import fuse_frame
from occfusion.model import BoundingBox2D
from occfusion.pfp import extract_objects
from occfusion.projection import ProjectedCloud


def random_frame(rng, n_boxes, n_points, width=1242, height=375):
    boxes = []
    for _ in range(n_boxes):
        x0, y0 = rng.uniform(0, width - 60), rng.uniform(0, height - 60)
        boxes.append(BoundingBox2D("car", float(rng.uniform(0.3, 1.0)), x0, y0,
                                   x0 + rng.uniform(20, 200), y0 + rng.uniform(20, 120)))
    dynamic = rng.random(n_points) < 0.4
    vel = np.where(dynamic[:, None], rng.normal(0, 3, (n_points, 2)), 0.0)
    cloud = ProjectedCloud(
        u=rng.uniform(0, width, n_points), v=rng.uniform(0, height, n_points),
        x=rng.uniform(5, 40, n_points), y=rng.uniform(-10, 10, n_points),
        vx=vel[:, 0], vy=vel[:, 1], dynamic=dynamic, index=np.arange(n_points),
    )
    return boxes, cloud


def measure(n_boxes=50, n_points=10_000, n_frames=50, seed=0):
    """Return per-frame latencies in milliseconds."""
    rng = np.random.default_rng(seed)
    frames = [random_frame(rng, n_boxes, n_points) for _ in range(n_frames)]
    out = []
    for f, (boxes, cloud) in enumerate(frames):
        t0 = time.perf_counter()
        extract_objects(fuse_frame(boxes, cloud), f)
        out.append((time.perf_counter() - t0) * 1e3)
    return np.asarray(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--boxes", type=int, default=50)
    ap.add_argument("--points", type=int, default=10_000)
    ap.add_argument("--frames", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    lat = measure(args.boxes, args.points, args.frames, args.seed)
    print(f"frames={len(lat)} min={lat.min():.3f} median={np.median(lat):.3f} "
          f"p99={np.percentile(lat, 99):.3f} max={lat.max():.3f} ms")


if __name__ == "__main__":
    main()
