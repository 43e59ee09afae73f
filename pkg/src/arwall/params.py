"""Tunable engine parameters for the AR augmentation techniques.

The referenced behaviors are qualitative (angles grow with distance,
curvature flattens near edges, and so on); these constants pin the exact
numbers. Every value can be overridden from the layout config or the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class AugmentParams:
    # Hinged panels: flat at hinge_near_m, fully orthogonal at hinge_far_m,
    # gone entirely once the analyst is past overview_distance_m.
    hinge_near_m: float = 1.2
    hinge_far_m: float = 3.5
    overview_distance_m: float = 4.5

    # Curved screen: flat window half-width around the analyst and the
    # maximum arc curvature (1/m).
    flat_window_halfwidth_m: float = 0.75
    curvature_max: float = 1.2

    # Embedded extrusions: total depth shared by the category segments.
    embed_depth_m: float = 0.25

    # Visualization layers: panel spacing and non-active opacity.
    layer_spacing_m: float = 0.15
    layer_inactive_opacity: float = 0.35

    # Link curves: apex lift as a fraction of endpoint distance, clamped.
    link_lift_factor: float = 0.15
    link_lift_min_m: float = 0.05
    link_lift_max_m: float = 0.6
    link_cap: int = 200

    # Lenses: default disc radius and de-overlap extrusion spacing.
    lens_radius_px: float = 180.0
    lens_spacing_m: float = 0.05

    # Extended axis views: default bin count, strip thickness, and the gap
    # below which a neighboring view forces the strip to fold forward.
    axis_bins: int = 10
    axis_strip_px: float = 120.0
    fold_adjacency_px: float = 40.0

    # Annotations float just in front of the glass.
    annotation_z_m: float = 0.005

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_json(cls, data: dict | None) -> "AugmentParams":
        if not data:
            return cls()
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown augmentation parameters: {sorted(unknown)}")
        return cls(**data)
