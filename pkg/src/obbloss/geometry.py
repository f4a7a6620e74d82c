"""Exact rotated-rectangle geometry.

Boxes are ``(cx, cy, w, h, theta)`` with ``theta`` the rotation of the
w-axis from +x in radians.  The canonical form keeps ``w >= h`` and
``theta`` in ``[-pi/2, pi/2)``.

Polygons are plain lists of ``(x, y)`` tuples in counter-clockwise order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError, InvalidBoxError

Point = Tuple[float, float]
Polygon = List[Point]

HALF_PI = 0.5 * math.pi

# collinear / duplicate vertex cleanup after clipping
_CLEAN_TOL = 1e-12


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidBoxError(f"non-finite {name}: {getattr(self, name)!r}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"extents must be positive, got w={self.w!r}, h={self.h!r}")

    @classmethod
    def from_degrees(cls, cx, cy, w, h, theta_deg):
        return cls(float(cx), float(cy), float(w), float(h), math.radians(theta_deg))

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.theta)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def aspect_ratio(self) -> float:
        """Longer over shorter extent, always >= 1."""
        return max(self.w, self.h) / min(self.w, self.h)

    def replace(self, **changes) -> "OrientedBox":
        fields = dict(cx=self.cx, cy=self.cy, w=self.w, h=self.h, theta=self.theta)
        fields.update(changes)
        return OrientedBox(**fields)


def wrap_half_pi(theta: float) -> float:
    """Map an angle into ``[-pi/2, pi/2)`` using the rectangle's period pi."""
    if -HALF_PI <= theta < HALF_PI:
        return theta
    r = (theta + HALF_PI) % math.pi
    if r >= math.pi:  # float % can round up to the divisor
        r = 0.0
    return r - HALF_PI


def canonicalize(box: OrientedBox) -> OrientedBox:
    """Return the long-edge form of ``box``: ``w >= h`` and theta in [-pi/2, pi/2).

    >>> canonicalize(OrientedBox(0, 0, 3, 1, math.pi)).theta
    0.0
    """
    w, h, theta = box.w, box.h, box.theta
    if h > w:
        w, h, theta = h, w, theta + HALF_PI
    return OrientedBox(box.cx, box.cy, w, h, wrap_half_pi(theta))


def _corners(cx, cy, w, h, theta) -> Polygon:
    c, s = math.cos(theta), math.sin(theta)
    ux, uy = 0.5 * w * c, 0.5 * w * s
    vx, vy = -0.5 * h * s, 0.5 * h * c
    return [
        (cx + ux + vx, cy + uy + vy),
        (cx - ux + vx, cy - uy + vy),
        (cx - ux - vx, cy - uy - vy),
        (cx + ux - vx, cy + uy - vy),
    ]


def corners(box: OrientedBox) -> Polygon:
    """Four vertices of ``box``, counter-clockwise."""
    return _corners(box.cx, box.cy, box.w, box.h, box.theta)


def signed_area(poly: Sequence[Point]) -> float:
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    x0, y0 = poly[-1]
    for x1, y1 in poly:
        acc += x0 * y1 - x1 * y0
        x0, y0 = x1, y1
    return 0.5 * acc


def area(poly: Sequence[Point]) -> float:
    """Shoelace area; 0 for fewer than three vertices."""
    return abs(signed_area(poly))


def _clean(poly: Polygon) -> Polygon:
    # drop near-duplicate vertices, then vertices within tolerance of the
    # line through their neighbours
    out: Polygon = []
    for p in poly:
        if not out or abs(p[0] - out[-1][0]) > _CLEAN_TOL or abs(p[1] - out[-1][1]) > _CLEAN_TOL:
            out.append(p)
    if len(out) > 1 and abs(out[0][0] - out[-1][0]) <= _CLEAN_TOL and abs(out[0][1] - out[-1][1]) <= _CLEAN_TOL:
        out.pop()
    changed = True
    while changed and len(out) >= 3:
        changed = False
        for i in range(len(out)):
            ax, ay = out[i - 1]
            bx, by = out[i]
            cx, cy = out[(i + 1) % len(out)]
            ex, ey = cx - ax, cy - ay
            length = math.hypot(ex, ey)
            if length <= _CLEAN_TOL:
                del out[i]
                changed = True
                break
            dist = abs(ex * (by - ay) - ey * (bx - ax)) / length
            if dist <= _CLEAN_TOL:
                del out[i]
                changed = True
                break
    if len(out) < 3:
        return []
    return out


def clip_convex(subject: Sequence[Point], clip: Sequence[Point]) -> Polygon:
    """Intersection of two convex counter-clockwise polygons (Sutherland-Hodgman).

    Returns an empty list when the polygons are disjoint or only touch.
    """
    output: Polygon = list(subject)
    if not output or len(clip) < 3:
        return []
    px, py = clip[-1]
    for qx, qy in clip:
        if not output:
            return []
        ex, ey = qx - px, qy - py
        inputs = output
        output = []
        sx, sy = inputs[-1]
        ds = ex * (sy - py) - ey * (sx - px)
        for vx, vy in inputs:
            dv = ex * (vy - py) - ey * (vx - px)
            if dv >= 0.0:
                if ds < 0.0:
                    t = ds / (ds - dv)
                    output.append((sx + t * (vx - sx), sy + t * (vy - sy)))
                output.append((vx, vy))
            elif ds >= 0.0:
                t = ds / (ds - dv)
                output.append((sx + t * (vx - sx), sy + t * (vy - sy)))
            sx, sy, ds = vx, vy, dv
        px, py = qx, qy
    return _clean(output)


def _skew_iou_raw(a, b) -> float:
    inter = area(clip_convex(_corners(*a), _corners(*b)))
    union = a[2] * a[3] + b[2] * b[3] - inter
    iou = inter / max(union, np.finfo(float).eps)
    return min(max(iou, 0.0), 1.0)


def skew_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Exact IoU of two rotated rectangles via polygon clipping."""
    return _skew_iou_raw(a.as_tuple(), b.as_tuple())


def _inside(points: np.ndarray, box: OrientedBox) -> np.ndarray:
    c, s = math.cos(box.theta), math.sin(box.theta)
    dx = points[:, 0] - box.cx
    dy = points[:, 1] - box.cy
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= 0.5 * box.w) & (np.abs(v) <= 0.5 * box.h)


def monte_carlo_iou(a: OrientedBox, b: OrientedBox, samples: int = 1_000_000,
                    seed: int = 0, chunk: int = 250_000) -> float:
    """Point-sampling IoU estimate over the bounding rectangle of both boxes.

    Independent of the clipping code path; used to validate :func:`skew_iou`.
    """
    if samples < 1:
        raise InvalidArgumentError(f"samples must be >= 1, got {samples}")
    pts = np.array(corners(a) + corners(b))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    rng = np.random.default_rng(seed)
    n_both = n_either = 0
    remaining = samples
    while remaining > 0:
        m = min(chunk, remaining)
        p = lo + (hi - lo) * rng.random((m, 2))
        in_a = _inside(p, a)
        in_b = _inside(p, b)
        n_both += int(np.count_nonzero(in_a & in_b))
        n_either += int(np.count_nonzero(in_a | in_b))
        remaining -= m
    if n_either == 0:
        return 0.0
    return n_both / n_either
