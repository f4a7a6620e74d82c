import math

import numpy as np
import pytest

from obbloss import OrientedBox


def random_box(rng, center=5.0, lo=0.5, hi=8.0):
    return OrientedBox(float(rng.uniform(-center, center)), float(rng.uniform(-center, center)),
                       float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)),
                       float(rng.uniform(-math.pi, math.pi)))


def random_pairs(n, seed, **kw):
    rng = np.random.default_rng(seed)
    return [(random_box(rng, **kw), random_box(rng, **kw)) for _ in range(n)]


def raster_iou(a, b, n=1500):
    """Grid-rasterized IoU over the joint bounding box (cell centers)."""
    from obbloss.geometry import _inside, corners
    pts = np.array(corners(a) + corners(b))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    xs = lo[0] + (np.arange(n) + 0.5) * (hi[0] - lo[0]) / n
    ys = lo[1] + (np.arange(n) + 0.5) * (hi[1] - lo[1]) / n
    gx, gy = np.meshgrid(xs, ys)
    p = np.column_stack([gx.ravel(), gy.ravel()])
    ia, ib = _inside(p, a), _inside(p, b)
    return np.count_nonzero(ia & ib) / np.count_nonzero(ia | ib)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion and assert on it."""
    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
