"""Small 2D/3D geometry helpers shared across the engine.

Points are plain tuples of floats: ``(x, y)`` for view/pixel space,
``(x, y, z)`` for the display-anchored world frame (meters, origin at the
display's lower-left corner, x rightward, y upward, z toward the analysts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Vec3 = tuple[float, float, float]
Vec2 = tuple[float, float]


def vadd(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vsub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vscale(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def vdot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def vcross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def vlength(a: Vec3) -> float:
    return math.sqrt(vdot(a, a))


def vnormalize(a: Vec3) -> Vec3:
    n = vlength(a)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return (a[0] / n, a[1] / n, a[2] / n)


def vdist(a: Vec3, b: Vec3) -> float:
    return vlength(vsub(a, b))


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def rotate_about_line(p: Vec3, origin: Vec3, axis: Vec3, angle_deg: float) -> Vec3:
    """Rotate a point about the line through ``origin`` with direction ``axis``.

    Rodrigues rotation; angle follows the right-hand rule around ``axis``.
    """
    u = vnormalize(axis)
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    v = vsub(p, origin)
    rotated = vadd(
        vadd(vscale(v, c), vscale(vcross(u, v), s)),
        vscale(u, vdot(u, v) * (1.0 - c)),
    )
    return vadd(origin, rotated)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, origin at its lower-left corner (y grows up)."""

    x: float
    y: float
    w: float
    h: float

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> Vec2:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def contains(self, p: Vec2) -> bool:
        return self.x <= p[0] <= self.x2 and self.y <= p[1] <= self.y2

    def overlaps(self, other: "Rect") -> bool:
        return (
            self.x < other.x2
            and other.x < self.x2
            and self.y < other.y2
            and other.y < self.y2
        )

    def to_json(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_json(cls, data: list[float]) -> "Rect":
        x, y, w, h = (float(v) for v in data)
        return cls(x, y, w, h)


@dataclass(frozen=True)
class Quad3:
    """An oriented planar quadrilateral in world space (4 corners, in order)."""

    corners: tuple[Vec3, Vec3, Vec3, Vec3]

    def to_json(self) -> list[list[float]]:
        return [list(c) for c in self.corners]

    @property
    def center(self) -> Vec3:
        cx = sum(c[0] for c in self.corners) / 4.0
        cy = sum(c[1] for c in self.corners) / 4.0
        cz = sum(c[2] for c in self.corners) / 4.0
        return (cx, cy, cz)


def quad_from_rect(rect: Rect, z: float = 0.0) -> Quad3:
    """Lift a planar rectangle into 3D, corners counterclockwise from lower-left."""
    return Quad3(
        (
            (rect.x, rect.y, z),
            (rect.x2, rect.y, z),
            (rect.x2, rect.y2, z),
            (rect.x, rect.y2, z),
        )
    )


def bbox_of(points: list[Vec3]) -> tuple[Vec3, Vec3]:
    """Axis-aligned bounding box (min corner, max corner) of a point list."""
    if not points:
        raise ValueError("bbox of empty point list")
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    zs = [p[2] for p in points]
    return (min(xs), min(ys), min(zs)), (max(xs), max(ys), max(zs))


def cubic_bezier_point(controls: tuple[Vec3, Vec3, Vec3, Vec3], t: float) -> Vec3:
    """Evaluate a cubic Bezier curve at parameter t in [0, 1]."""
    p0, p1, p2, p3 = controls
    mt = 1.0 - t
    a = mt * mt * mt
    b = 3.0 * mt * mt * t
    c = 3.0 * mt * t * t
    d = t * t * t
    return (
        a * p0[0] + b * p1[0] + c * p2[0] + d * p3[0],
        a * p0[1] + b * p1[1] + c * p2[1] + d * p3[1],
        a * p0[2] + b * p1[2] + c * p2[2] + d * p3[2],
    )
