"""Physical display model, display-anchored world frame, and spatial zones.

The world origin sits at the display's lower-left corner: x runs rightward
along the screen, y upward, z toward the analysts. Display pixels share the
same origin and orientation, so pixel<->world conversion is a pure scale.
The space around the screen partitions into 3x3 planar zones (left/center/
right x bottom/middle/top), each extended into depth (behind/coincident/
front), for 27 zones total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Rect, Quad3, Vec2, Vec3

HORIZONTAL = ("left", "center", "right")
VERTICAL = ("bottom", "middle", "top")
DEPTH = ("behind", "coincident", "front")

# AR content within 1 cm of the screen counts as lying on it.
COINCIDENT_TOLERANCE_M = 0.01


class NonAdjacentRect(ValueError):
    """The rectangle to fold shares no edge with the visualization."""


@dataclass(frozen=True)
class DisplayConfig:
    """Physical display metrics. Pixel and metric extents are measured
    independently; no aspect consistency is assumed."""

    width_px: int
    height_px: int
    width_m: float
    height_m: float

    def __post_init__(self):
        for f in ("width_px", "height_px", "width_m", "height_m"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")

    @property
    def pixel_rect(self) -> Rect:
        return Rect(0.0, 0.0, float(self.width_px), float(self.height_px))

    def to_json(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "width_m": self.width_m,
            "height_m": self.height_m,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DisplayConfig":
        return cls(
            width_px=int(data["width_px"]),
            height_px=int(data["height_px"]),
            width_m=float(data["width_m"]),
            height_m=float(data["height_m"]),
        )


# Shipped device presets: an 84" 4K collaboration screen and a tiled wall.
PRESETS: dict[str, DisplayConfig] = {
    "surface-hub-84": DisplayConfig(3840, 2160, 1.872, 1.053),
    "display-wall": DisplayConfig(7680, 3240, 4.86, 2.06),
}


@dataclass(frozen=True)
class Zone:
    """One cell of the 3x3x3 partition of world space around the display."""

    horizontal: str
    vertical: str
    depth: str

    def __post_init__(self):
        if (
            self.horizontal not in HORIZONTAL
            or self.vertical not in VERTICAL
            or self.depth not in DEPTH
        ):
            raise ValueError(f"invalid zone {self}")

    def to_json(self) -> list[str]:
        return [self.horizontal, self.vertical, self.depth]

    def __lt__(self, other: "Zone") -> bool:
        return self.to_json() < other.to_json()


@dataclass(frozen=True)
class Pose:
    """A tracked analyst: position in world meters, unit facing vector."""

    user: str
    position: Vec3
    facing: Vec3 = (0.0, 0.0, -1.0)

    def __post_init__(self):
        norm = math.sqrt(sum(c * c for c in self.facing))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"facing vector must be unit length, got |f|={norm}")

    def to_json(self) -> dict:
        return {"position": list(self.position), "facing": list(self.facing)}

    @classmethod
    def from_json(cls, user: str, data: dict) -> "Pose":
        return cls(
            user=user,
            position=tuple(float(c) for c in data["position"]),
            facing=tuple(float(c) for c in data["facing"]),
        )


def display_to_world(p: Vec2, cfg: DisplayConfig) -> Vec3:
    """Map a display pixel point onto the world-frame display plane (z=0).

    Points outside the screen extrapolate linearly.
    """
    return (
        (p[0] / cfg.width_px) * cfg.width_m,
        (p[1] / cfg.height_px) * cfg.height_m,
        0.0,
    )


def world_to_display(p: Vec3, cfg: DisplayConfig) -> Vec2:
    """Inverse of display_to_world for points on the display plane."""
    return (
        (p[0] / cfg.width_m) * cfg.width_px,
        (p[1] / cfg.height_m) * cfg.height_px,
    )


def rect_to_world(rect: Rect, cfg: DisplayConfig) -> Rect:
    """Convert a pixel-space rectangle to world meters on the display plane."""
    x0, y0, _ = display_to_world((rect.x, rect.y), cfg)
    x1, y1, _ = display_to_world((rect.x2, rect.y2), cfg)
    return Rect(x0, y0, x1 - x0, y1 - y0)


def classify_zone(p: Vec3, cfg: DisplayConfig) -> Zone:
    """Assign a world point to exactly one of the 27 zones."""
    x, y, z = p
    if x < 0.0:
        horizontal = "left"
    elif x <= cfg.width_m:
        horizontal = "center"
    else:
        horizontal = "right"
    if y < 0.0:
        vertical = "bottom"
    elif y <= cfg.height_m:
        vertical = "middle"
    else:
        vertical = "top"
    if abs(z) <= COINCIDENT_TOLERANCE_M:
        depth = "coincident"
    elif z > 0.0:
        depth = "front"
    else:
        depth = "behind"
    return Zone(horizontal, vertical, depth)


def _interval_bands(lo: float, hi: float, bounds: tuple[float, float], names) -> list[str]:
    """Names of the bands [-inf,b0), [b0,b1], (b1,inf) a range overlaps.

    Only positive-measure overlap counts, so a body ending exactly on a band
    boundary stays out of the neighboring band. Degenerate ranges sitting
    exactly on a boundary fall back to the band their midpoint classifies to.
    """
    b0, b1 = bounds
    hit = []
    if lo < b0:
        hit.append(names[0])
    if hi > b0 and lo < b1:
        hit.append(names[1])
    if hi > b1:
        hit.append(names[2])
    if not hit:
        mid = (lo + hi) / 2.0
        if mid < b0:
            hit.append(names[0])
        elif mid <= b1:
            hit.append(names[1])
        else:
            hit.append(names[2])
    return hit


def zones_of_box(lo: Vec3, hi: Vec3, cfg: DisplayConfig) -> list[Zone]:
    """All zones an axis-aligned world box occupies, sorted.

    An extended body occupies the set of zones its bounding box overlaps
    with positive measure.
    """
    hs = _interval_bands(lo[0], hi[0], (0.0, cfg.width_m), HORIZONTAL)
    vs = _interval_bands(lo[1], hi[1], (0.0, cfg.height_m), VERTICAL)
    d = COINCIDENT_TOLERANCE_M
    ds = _interval_bands(lo[2], hi[2], (-d, d), DEPTH)
    return sorted(Zone(h, v, dp) for h in hs for v in vs for dp in ds)


def _shared_edge(zone_rect: Rect, vis_rect: Rect, tol: float = 1e-9):
    """Identify the edge the zone rectangle shares with the visualization.

    Returns (side, hinge coordinate); side names the vis edge the zone sits
    against. The rectangles must touch along that edge line with overlapping
    lateral extent.
    """
    overlap_x = min(zone_rect.x2, vis_rect.x2) - max(zone_rect.x, vis_rect.x)
    overlap_y = min(zone_rect.y2, vis_rect.y2) - max(zone_rect.y, vis_rect.y)
    if abs(zone_rect.y2 - vis_rect.y) <= tol and overlap_x > tol:
        return "bottom", vis_rect.y
    if abs(zone_rect.y - vis_rect.y2) <= tol and overlap_x > tol:
        return "top", vis_rect.y2
    if abs(zone_rect.x2 - vis_rect.x) <= tol and overlap_y > tol:
        return "left", vis_rect.x
    if abs(zone_rect.x - vis_rect.x2) <= tol and overlap_y > tol:
        return "right", vis_rect.x2
    raise NonAdjacentRect(
        f"rectangle {zone_rect} shares no edge with visualization {vis_rect}"
    )


def fold_plane(zone_rect: Rect, vis_rect: Rect) -> Quad3:
    """Fold a planar zone rectangle 90 degrees about its edge shared with the
    visualization, toward the analysts (+z).

    The hinge edge stays fixed pointwise and the fold is an isometry: a point
    at planar distance d from the hinge ends up at depth z=d on the hinge
    line. Only planar display-plane rectangles fold; the result is a 3D quad
    with no further fold affordance.
    """
    if not isinstance(zone_rect, Rect) or not isinstance(vis_rect, Rect):
        raise TypeError("fold_plane folds planar display-plane rectangles only")
    side, hinge = _shared_edge(zone_rect, vis_rect)

    def fold_point(x: float, y: float) -> Vec3:
        if side == "bottom":
            return (x, hinge, hinge - y)
        if side == "top":
            return (x, hinge, y - hinge)
        if side == "left":
            return (hinge, y, hinge - x)
        return (hinge, y, x - hinge)

    corners = (
        (zone_rect.x, zone_rect.y),
        (zone_rect.x2, zone_rect.y),
        (zone_rect.x2, zone_rect.y2),
        (zone_rect.x, zone_rect.y2),
    )
    return Quad3(tuple(fold_point(x, y) for x, y in corners))


@dataclass(frozen=True)
class ProxemicInfo:
    """Which side of the display a pose favors, plus raw edge distances."""

    side: str  # "left" | "right"
    distances: dict  # left/right/bottom/top edge distances + display plane

    def to_json(self) -> dict:
        return {"side": self.side, "distances": dict(self.distances)}


def proxemic_side(pose: Pose, cfg: DisplayConfig) -> ProxemicInfo:
    """Prefer the display side horizontally nearer to the analyst.

    The exact-center tie resolves to "right"; any fixed rule works, this one
    is documented and stable.
    """
    x, y, z = pose.position
    distances = {
        "left": abs(x),
        "right": abs(cfg.width_m - x),
        "bottom": abs(y),
        "top": abs(cfg.height_m - y),
        "plane": abs(z),
    }
    side = "left" if distances["left"] < distances["right"] else "right"
    return ProxemicInfo(side=side, distances=distances)
