"""2D geometry primitives: poses, rigid transforms, oriented boxes, sightlines."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise ValidationError(f"non-finite pose {(self.x, self.y, self.yaw)}")

    def apply(self, px: float, py: float) -> tuple[float, float]:
        """Map a point from this pose's local frame into the world frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return (self.x + c * px - s * py, self.y + s * px + c * py)

    def invert_point(self, wx: float, wy: float) -> tuple[float, float]:
        """Map a world point into this pose's local frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx, dy = wx - self.x, wy - self.y
        return (c * dx + s * dy, -s * dx + c * dy)


def obb_corners(cx: float, cy: float, yaw: float, length: float, width: float) -> list[tuple[float, float]]:
    """Corners of an oriented box; length runs along the heading."""
    c, s = math.cos(yaw), math.sin(yaw)
    hl, hw = length / 2.0, width / 2.0
    return [
        (cx + c * dx - s * dy, cy + s * dx + c * dy)
        for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))
    ]


def obb_penetration(
    a: tuple[float, float, float, float, float],
    b: tuple[float, float, float, float, float],
) -> float:
    """Penetration depth between two oriented boxes (cx, cy, yaw, length, width).

    Separating-axis test over the four face normals; returns 0.0 when the
    boxes do not overlap, otherwise the smallest translation that separates
    them.
    """
    ax, ay, ayaw, al, aw = a
    bx, by, byaw, bl, bw = b
    axes = []
    for yaw in (ayaw, byaw):
        c, s = math.cos(yaw), math.sin(yaw)
        axes.append((c, s))
        axes.append((-s, c))
    half = ((al / 2, aw / 2, ayaw), (bl / 2, bw / 2, byaw))
    dx, dy = bx - ax, by - ay
    min_pen = math.inf
    for ux, uy in axes:
        dist = abs(ux * dx + uy * dy)
        reach = 0.0
        for hl, hw, yaw in half:
            c, s = math.cos(yaw), math.sin(yaw)
            # projection radius of a box onto the axis
            reach += abs((ux * c + uy * s) * hl) + abs((-ux * s + uy * c) * hw)
        pen = reach - dist
        if pen <= 0.0:
            return 0.0
        min_pen = min(min_pen, pen)
    return min_pen


def point_in_obb(px: float, py: float, box: tuple[float, float, float, float, float]) -> bool:
    cx, cy, yaw, length, width = box
    c, s = math.cos(yaw), math.sin(yaw)
    dx, dy = px - cx, py - cy
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return abs(lx) <= length / 2.0 and abs(ly) <= width / 2.0


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 1e-12:
            return 1
        if v < -1e-12:
            return -1
        return 0

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
            and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12
        )

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False


def segment_hits_obb(
    x0: float, y0: float, x1: float, y1: float,
    box: tuple[float, float, float, float, float],
) -> bool:
    """True when the open segment (x0,y0)->(x1,y1) touches the oriented box."""
    if point_in_obb(x0, y0, box) or point_in_obb(x1, y1, box):
        return True
    corners = obb_corners(box[0], box[1], box[2], box[3], box[4])
    p1, p2 = (x0, y0), (x1, y1)
    for i in range(4):
        if _segments_cross(p1, p2, corners[i], corners[(i + 1) % 4]):
            return True
    return False
