import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

from occfusion.model import BoundingBox2D, GridPoint, MotionState, ProjectedPoint
from occfusion.synth import kitti_like_calibration

hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture
def kitti_calib():
    return kitti_like_calibration()


def make_box(x0, y0, x1, y1, label="car", conf=0.9):
    return BoundingBox2D(label, conf, x0, y0, x1, y1)


def make_point(u, v, x=0.0, y=0.0, vx=0.0, vy=0.0, dynamic=False):
    state = MotionState.DYNAMIC if dynamic else MotionState.STATIC
    if not dynamic:
        vx = vy = 0.0
    return ProjectedPoint(u, v, GridPoint(x, y, vx, vy, state))


def random_boxes(rng, n, width=1242.0, height=375.0):
    out = []
    for _ in range(n):
        x0, y0 = rng.uniform(-20, width), rng.uniform(-20, height)
        out.append(make_box(x0, y0, x0 + rng.uniform(1, 300), y0 + rng.uniform(1, 200),
                            conf=float(rng.uniform(0, 1))))
    return out


def random_points(rng, n, width=1242.0, height=375.0):
    dyn = rng.random(n) < 0.5
    return [make_point(float(u), float(v), float(x), float(y), float(vx), float(vy), bool(d))
            for u, v, x, y, vx, vy, d in zip(
                rng.uniform(0, width, n), rng.uniform(0, height, n),
                rng.uniform(5, 40, n), rng.uniform(-10, 10, n),
                rng.normal(0, 3, n), rng.normal(0, 3, n), dyn)]


coords = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw, label="car"):
    x0 = draw(st.floats(0, 2000))
    y0 = draw(st.floats(0, 2000))
    w = draw(st.floats(1e-3, 1000))
    h = draw(st.floats(1e-3, 1000))
    conf = draw(st.floats(0, 1))
    return BoundingBox2D(label, conf, x0, y0, x0 + w, y0 + h)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
