"""Per-user AR scene composition over the shared display.

Eight technique families turn (session state, viewer) into augmentation
nodes in display-anchored world coordinates: embedded extrusions on data
marks, hinged copies of remote views, a curved remapping of peripheral
screen content, 3D link curves for brushing and linking, extended axis
histograms, stacked visualization layers, personal lenses, and pen
annotations. Everything here is a pure function of an immutable state
snapshot; per-viewer scenes can be composed independently and in parallel.

Composition is deterministic: fixed technique precedence, sorted node ids,
and canonical float serialization make identical inputs yield identical
scenes byte for byte.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

from .canon import format_float
from .data import RowFilter, aggregate
from .geometry import (
    Quad3,
    Rect,
    Vec3,
    bbox_of,
    clamp,
    quad_from_rect,
    vdist,
)
from .params import AugmentParams
from .session import DISPLAY_SCOPE, SessionState, UnknownLens, UnknownUser, EmptyStack
from .spatial import (
    DisplayConfig,
    display_to_world,
    fold_plane,
    rect_to_world,
    zones_of_box,
)
from .vis import (
    POINT_HIT_RADIUS_PX,
    PALETTE,
    Mark,
    axis_column,
    build_marks,
    category_label,
    mark_anchor,
    mark_world_position,
    view_to_display,
)

log = logging.getLogger(__name__)

EMBEDDED = "embedded_vis"
HINGED = "hinged_vis"
CURVED = "curved_panel"
LINK = "link_curve"
AXIS_VIEW = "axis_view"
LAYER = "vis_layer"
LENS = "lens"
ANNOTATION = "annotation"

# Fixed composition order; makes combined techniques deterministic.
PRECEDENCE = {
    CURVED: 0,
    HINGED: 1,
    LAYER: 2,
    AXIS_VIEW: 3,
    EMBEDDED: 4,
    LENS: 5,
    LINK: 6,
    ANNOTATION: 7,
}


class BadParams(ValueError):
    """Hinge distances are inconsistent (near >= far)."""


class DegenerateLink(ValueError):
    """Link endpoints coincide."""


@dataclass(frozen=True)
class AugmentationNode:
    """One piece of AR content in world coordinates."""

    id: str
    kind: str
    owner: str  # user id or "public"
    vis_id: str | None
    position: Vec3
    payload: dict
    zone_set: tuple
    rotation_axis: Vec3 = (0.0, 0.0, 1.0)
    rotation_deg: float = 0.0

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "owner": self.owner,
            "vis": self.vis_id,
            "transform": {
                "position": list(self.position),
                "rotation_axis": list(self.rotation_axis),
                "rotation_deg": self.rotation_deg,
            },
            "payload": self.payload,
            "zones": [z.to_json() for z in self.zone_set],
        }


@dataclass(frozen=True)
class ARScene:
    """The composed scene one viewer sees, tied to a state sequence number."""

    viewer: str
    seq: int
    nodes: tuple

    def to_json(self) -> dict:
        return {
            "viewer": self.viewer,
            "seq": self.seq,
            "nodes": [n.to_json() for n in self.nodes],
        }

    def by_kind(self, kind: str) -> list:
        return [n for n in self.nodes if n.kind == kind]


def _make_node(
    node_id: str,
    kind: str,
    owner: str,
    vis_id: str | None,
    position: Vec3,
    payload: dict,
    extent_points: list,
    cfg: DisplayConfig,
    rotation_axis: Vec3 = (0.0, 0.0, 1.0),
    rotation_deg: float = 0.0,
) -> AugmentationNode:
    lo, hi = bbox_of(list(extent_points) + [position])
    return AugmentationNode(
        id=node_id,
        kind=kind,
        owner=owner,
        vis_id=vis_id,
        position=position,
        payload=payload,
        zone_set=tuple(zones_of_box(lo, hi, cfg)),
        rotation_axis=rotation_axis,
        rotation_deg=rotation_deg,
    )


def _mark_rect_world(mark: Mark, view_rect: Rect, cfg: DisplayConfig) -> Rect:
    g = mark.geometry
    px = Rect(
        view_rect.x + g["x"] * view_rect.w,
        view_rect.y + g["y"] * view_rect.h,
        g["w"] * view_rect.w,
        g["h"] * view_rect.h,
    )
    return rect_to_world(px, cfg)


def _px_to_m(px: float, cfg: DisplayConfig) -> float:
    return px * cfg.width_m / cfg.width_px


# ---------------------------------------------------------------------------
# Embedded AR visualizations


def embedded_vis_nodes(state: SessionState, viewer: str) -> list:
    """Extruded per-mark stacks encoding an extra dimension's distribution.

    Each toggled mark grows a stack orthogonal to the display: total depth
    split among the embed dimension's category values proportionally to
    their counts within the mark's rows. Cylindrical for point marks,
    cuboid for bars. Marks whose rows carry no value in the dimension are
    omitted with a warning.
    """
    me = state.user(viewer)
    cfg = state.config.display
    depth_total = state.config.params.embed_depth_m
    nodes = []
    for vis_id in sorted(me.toggles):
        embed = me.toggles[vis_id].get("embedded")
        if not embed or vis_id == DISPLAY_SCOPE:
            continue
        spec = state.config.spec(vis_id)
        markset = state.config.markset(vis_id)
        dimension = embed["dimension"]
        col = state.config.table.column(dimension)
        for mark_id in embed["marks"]:
            mark = markset.mark(mark_id)
            tally: dict = {}
            for r in sorted(mark.row_ids):
                v = col.values[r]
                if v is None:
                    continue
                label = category_label(v)
                tally[label] = tally.get(label, 0) + 1
            total = sum(tally.values())
            if total == 0:
                log.warning(
                    "embedded vis omitted: mark %s has no values in %r", mark_id, dimension
                )
                continue
            segments = []
            z = 0.0
            for label in sorted(tally):
                seg_depth = depth_total * tally[label] / total
                segments.append(
                    {"category": label, "count": tally[label], "z_m": z, "depth_m": seg_depth}
                )
                z += seg_depth
            anchor = mark_world_position(mark, spec, cfg)
            if mark.shape == "point":
                shape = "cylinder"
                radius = _px_to_m(POINT_HIT_RADIUS_PX, cfg)
                footprint = {"center": list(anchor[:2]), "radius_m": radius}
                extent = [
                    (anchor[0] - radius, anchor[1] - radius, 0.0),
                    (anchor[0] + radius, anchor[1] + radius, depth_total),
                ]
            else:
                shape = "cuboid"
                world = _mark_rect_world(mark, spec.view_rect, cfg)
                footprint = {"rect_m": world.to_json()}
                extent = [
                    (world.x, world.y, 0.0),
                    (world.x2, world.y2, depth_total),
                ]
            nodes.append(
                _make_node(
                    node_id=f"{viewer}:embed:{mark_id}",
                    kind=EMBEDDED,
                    owner=viewer,
                    vis_id=vis_id,
                    position=anchor,
                    payload={
                        "vis": vis_id,
                        "mark": mark_id,
                        "dimension": dimension,
                        "shape": shape,
                        "footprint": footprint,
                        "segments": segments,
                        "depth_m": depth_total,
                    },
                    extent_points=extent,
                    cfg=cfg,
                )
            )
    return nodes


# ---------------------------------------------------------------------------
# Hinged visualizations


def hinge_angle(d: float, near: float | None = None, far: float | None = None,
                params: AugmentParams | None = None) -> float:
    """Tilt of a hinged panel in degrees as a function of analyst distance.

    Linear ramp: 0 degrees at the near distance, 90 (orthogonal to the
    display) at the far distance, clamped outside.
    """
    p = params or AugmentParams()
    near = p.hinge_near_m if near is None else near
    far = p.hinge_far_m if far is None else far
    if near >= far:
        raise BadParams(f"hinge near distance {near} must be below far distance {far}")
    if d < 0:
        raise ValueError("distance must be non-negative")
    return 90.0 * clamp((d - near) / (far - near), 0.0, 1.0)


def _hinged_panel(rect: Rect, hinge: str, angle_deg: float) -> Quad3:
    """Rotate a display-plane rectangle about one vertical edge toward +z."""
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    x0 = rect.x if hinge == "left" else rect.x2

    def swing(x: float, y: float) -> Vec3:
        u = x - x0 if hinge == "left" else x0 - x
        nx = x0 + u * c if hinge == "left" else x0 - u * c
        return (nx, y, u * s)

    return Quad3(
        (
            swing(rect.x, rect.y),
            swing(rect.x2, rect.y),
            swing(rect.x2, rect.y2),
            swing(rect.x, rect.y2),
        )
    )


def hinged_nodes(state: SessionState, viewer: str) -> list:
    """Door-like AR copies of remote views, rotated toward the analyst.

    A view qualifies if the viewer toggled it explicitly or if it contains
    marks linked to the viewer's selection, and its center is farther than
    the hinge near distance. Once the analyst steps past the overview
    distance from the display plane, all hinged panels disappear.
    """
    me = state.user(viewer)
    cfg = state.config.display
    p = state.config.params
    if abs(me.pose.position[2]) > p.overview_distance_m:
        return []

    all_selected: set = set()
    for rows in me.selections.values():
        all_selected |= rows

    candidates = set()
    for vis_id, toggles in me.toggles.items():
        if "hinged" in toggles and vis_id != DISPLAY_SCOPE:
            candidates.add(vis_id)
    if all_selected:
        for vis_id, markset in state.config.marksets.items():
            if any(m.row_ids & all_selected for m in markset.marks):
                candidates.add(vis_id)

    nodes = []
    for vis_id in sorted(candidates):
        spec = state.config.spec(vis_id)
        world = rect_to_world(spec.view_rect, cfg)
        center = (world.x + world.w / 2.0, world.y + world.h / 2.0, 0.0)
        d = vdist(me.pose.position, center)
        if d <= p.hinge_near_m:
            continue
        angle = hinge_angle(d, params=p)
        d_left = abs(me.pose.position[0] - world.x)
        d_right = abs(me.pose.position[0] - world.x2)
        hinge = "left" if d_left <= d_right else "right"
        panel = _hinged_panel(world, hinge, angle)
        hinge_x = world.x if hinge == "left" else world.x2
        nodes.append(
            _make_node(
                node_id=f"{viewer}:hinged:{vis_id}",
                kind=HINGED,
                owner=viewer,
                vis_id=vis_id,
                position=center,
                payload={
                    "vis": vis_id,
                    "angle_deg": angle,
                    "hinge": hinge,
                    "hinge_x_m": hinge_x,
                    "distance_m": d,
                    "panel": panel.to_json(),
                },
                extent_points=list(panel.corners),
                cfg=cfg,
                rotation_axis=(0.0, 1.0, 0.0),
                rotation_deg=angle if hinge == "left" else -angle,
            )
        )
    return nodes


# ---------------------------------------------------------------------------
# Curved AR screen


@dataclass(frozen=True)
class CurvedMapping:
    """Arc-length preserving remap of peripheral screen content.

    Content inside the flat window around the analyst stays put; content
    beyond either boundary bends onto a circular arc tangent to the display
    there, curving toward the analyst. Curvature per side grows with the
    analyst's distance from that display edge and flattens as they step
    back from the display plane.
    """

    window_lo: float
    window_hi: float
    kappa_left: float
    kappa_right: float

    @classmethod
    def for_viewer(cls, position: Vec3, cfg: DisplayConfig, p: AugmentParams,
                   overrides: dict | None = None) -> "CurvedMapping":
        o = overrides or {}
        w0 = float(o.get("flat_window_halfwidth_m", p.flat_window_halfwidth_m))
        kappa_max = float(o.get("curvature_max", p.curvature_max))
        xv = clamp(position[0], 0.0, cfg.width_m)
        depth_scale = max(0.0, 1.0 - abs(position[2]) / p.overview_distance_m)

        def side_kappa(edge_distance: float) -> float:
            return kappa_max * clamp((edge_distance - w0) / cfg.width_m, 0.0, 1.0) * depth_scale

        return cls(
            window_lo=xv - w0,
            window_hi=xv + w0,
            kappa_left=side_kappa(xv),
            kappa_right=side_kappa(cfg.width_m - xv),
        )

    def is_outside_window(self, x: float) -> bool:
        return x < self.window_lo or x > self.window_hi

    def map_point(self, point: Vec3) -> Vec3:
        """Map a world point; x,y live on the display plane, z rides the
        local surface normal."""
        x, y, z = point
        if x < self.window_lo and self.kappa_left > 0.0:
            radius = 1.0 / self.kappa_left
            arc = self.window_lo - x
            phi = arc / radius
            base = (
                self.window_lo - radius * math.sin(phi),
                y,
                radius * (1.0 - math.cos(phi)),
            )
            normal = (math.sin(phi), 0.0, math.cos(phi))
        elif x > self.window_hi and self.kappa_right > 0.0:
            radius = 1.0 / self.kappa_right
            arc = x - self.window_hi
            phi = arc / radius
            base = (
                self.window_hi + radius * math.sin(phi),
                y,
                radius * (1.0 - math.cos(phi)),
            )
            normal = (-math.sin(phi), 0.0, math.cos(phi))
        else:
            return (x, y, z)
        return (
            base[0] + z * normal[0],
            base[1] + z * normal[1],
            base[2] + z * normal[2],
        )


def curved_screen_nodes(state: SessionState, viewer: str) -> list:
    """Panels describing the two curved side surfaces, when toggled."""
    me = state.user(viewer)
    toggles = me.toggles.get(DISPLAY_SCOPE, {})
    if "curved" not in toggles:
        return []
    cfg = state.config.display
    mapping = CurvedMapping.for_viewer(
        me.pose.position, cfg, state.config.params, toggles["curved"]
    )
    nodes = []
    sides = (
        ("left", mapping.window_lo, mapping.kappa_left, mapping.window_lo - 0.0),
        ("right", mapping.window_hi, mapping.kappa_right, cfg.width_m - mapping.window_hi),
    )
    for side, boundary, kappa, span in sides:
        if kappa <= 0.0 or span <= 0.0:
            continue
        samples = []
        for i in range(17):
            x = boundary - span * i / 16.0 if side == "left" else boundary + span * i / 16.0
            for y in (0.0, cfg.height_m):
                samples.append(mapping.map_point((x, y, 0.0)))
        nodes.append(
            _make_node(
                node_id=f"{viewer}:curved:{side}",
                kind=CURVED,
                owner=viewer,
                vis_id=None,
                position=(boundary, cfg.height_m / 2.0, 0.0),
                payload={
                    "side": side,
                    "boundary_x_m": boundary,
                    "curvature": kappa,
                    "arc_span_m": span,
                    "window": [mapping.window_lo, mapping.window_hi],
                },
                extent_points=samples,
                cfg=cfg,
            )
        )
    return nodes


# ---------------------------------------------------------------------------
# AR brushing and linking


def bezier_link(p0: Vec3, p1: Vec3, params: AugmentParams | None = None) -> tuple:
    """Cubic Bezier control points joining two world points.

    Inner controls sit at 1/3 and 2/3 of the segment, lifted to an apex
    height that grows with endpoint distance and clamps to a fixed range.
    """
    if p0 == p1:
        raise DegenerateLink(f"link endpoints coincide at {p0}")
    p = params or AugmentParams()
    h = clamp(p.link_lift_factor * vdist(p0, p1), p.link_lift_min_m, p.link_lift_max_m)
    c1 = (p0[0] + (p1[0] - p0[0]) / 3.0, p0[1] + (p1[1] - p0[1]) / 3.0, h)
    c2 = (p0[0] + 2.0 * (p1[0] - p0[0]) / 3.0, p0[1] + 2.0 * (p1[1] - p0[1]) / 3.0, h)
    return (p0, c1, c2, p1)


def link_nodes(state: SessionState, viewer: str) -> list:
    """3D link curves from the viewer's selected marks to row-joined marks
    in every other view.

    A link joins marks that share selected rows. The viewer's link filter
    (an attribute predicate) drops links whose shared rows all fail it.
    Links beyond the cap are dropped farthest-first.
    """
    me = state.user(viewer)
    cfg = state.config.display
    p = state.config.params
    table = state.config.table
    link_filter = None
    filter_params = me.toggles.get(DISPLAY_SCOPE, {}).get("link_filter")
    if filter_params and "filter" in filter_params:
        link_filter = RowFilter.from_json(filter_params["filter"])

    links = []
    for src_vis in sorted(me.selections):
        selected = me.selections[src_vis]
        src_spec = state.config.spec(src_vis)
        src_marks = [
            m for m in state.config.markset(src_vis).marks if m.row_ids & selected
        ]
        for dst_vis in sorted(state.config.specs):
            if dst_vis == src_vis:
                continue
            dst_spec = state.config.spec(dst_vis)
            for src_mark in src_marks:
                src_rows = src_mark.row_ids & selected
                for dst_mark in state.config.markset(dst_vis).marks:
                    shared = src_rows & dst_mark.row_ids
                    if not shared:
                        continue
                    if link_filter is not None and not any(
                        link_filter.matches(table, r) for r in sorted(shared)
                    ):
                        continue
                    p0 = mark_world_position(src_mark, src_spec, cfg)
                    p1 = mark_world_position(dst_mark, dst_spec, cfg)
                    controls = bezier_link(p0, p1, p)
                    links.append(
                        _make_node(
                            node_id=f"{viewer}:link:{src_mark.id}->{dst_mark.id}",
                            kind=LINK,
                            owner=viewer,
                            vis_id=src_vis,
                            position=p0,
                            payload={
                                "from_vis": src_vis,
                                "to_vis": dst_vis,
                                "from_mark": src_mark.id,
                                "to_mark": dst_mark.id,
                                "rows": sorted(shared),
                                "controls": [list(c) for c in controls],
                            },
                            extent_points=list(controls),
                            cfg=cfg,
                        )
                    )
    if len(links) > p.link_cap:
        links.sort(key=lambda n: (vdist(n.position, tuple(n.payload["controls"][3])), n.id))
        links = links[: p.link_cap]
    return links


# ---------------------------------------------------------------------------
# Extended axis views


def extended_axis_nodes(state: SessionState, viewer: str) -> list:
    """Histogram strips extending a view's axis into the adjacent zone.

    The histogram bins the axis column over the whole table with bin edges
    sharing the axis scale, so bins align with the tick mapping. When
    another view sits within the fold threshold of that edge, the strip
    folds 90 degrees toward the analyst instead of lying flat.
    """
    me = state.user(viewer)
    cfg = state.config.display
    p = state.config.params
    nodes = []
    for vis_id in sorted(me.toggles):
        if vis_id == DISPLAY_SCOPE:
            continue
        for key in sorted(me.toggles[vis_id]):
            if not key.startswith("axis_view:"):
                continue
            tparams = me.toggles[vis_id][key]
            side = key.split(":", 1)[1]
            spec = state.config.spec(vis_id)
            column = axis_column(spec, side)
            bins = int(tparams.get("bins", p.axis_bins))
            hist = aggregate(state.config.table, column, bins=bins)

            vr = spec.view_rect
            strip_px = p.axis_strip_px
            if side == "bottom":
                strip = Rect(vr.x, vr.y - strip_px, vr.w, strip_px)
            elif side == "top":
                strip = Rect(vr.x, vr.y2, vr.w, strip_px)
            elif side == "left":
                strip = Rect(vr.x - strip_px, vr.y, strip_px, vr.h)
            else:
                strip = Rect(vr.x2, vr.y, strip_px, vr.h)

            folded = _edge_obstructed(state, spec, side, p.fold_adjacency_px)
            strip_world = rect_to_world(strip, cfg)
            vis_world = rect_to_world(vr, cfg)
            if folded:
                quad = fold_plane(strip_world, vis_world)
            else:
                quad = quad_from_rect(strip_world)

            lo, hi = hist.bin_edges[0], hist.bin_edges[-1]
            max_count = max(hist.counts) if any(hist.counts) else 1
            bars = [
                {
                    "from": (hist.bin_edges[i] - lo) / (hi - lo),
                    "to": (hist.bin_edges[i + 1] - lo) / (hi - lo),
                    "height": hist.counts[i] / max_count,
                    "count": hist.counts[i],
                }
                for i in range(len(hist.counts))
            ]
            nodes.append(
                _make_node(
                    node_id=f"{viewer}:axis:{vis_id}:{side}",
                    kind=AXIS_VIEW,
                    owner=viewer,
                    vis_id=vis_id,
                    position=quad.center,
                    payload={
                        "vis": vis_id,
                        "side": side,
                        "column": column,
                        "folded": folded,
                        "histogram": hist.to_json(),
                        "bars": bars,
                        "strip": quad.to_json(),
                    },
                    extent_points=list(quad.corners),
                    cfg=cfg,
                )
            )
    return nodes


def _edge_obstructed(state: SessionState, spec, side: str, threshold_px: float) -> bool:
    """True when another view's rectangle crowds the given edge."""
    vr = spec.view_rect
    for other_id in sorted(state.config.specs):
        if other_id == spec.id:
            continue
        o = state.config.specs[other_id].view_rect
        lateral_x = min(vr.x2, o.x2) - max(vr.x, o.x)
        lateral_y = min(vr.y2, o.y2) - max(vr.y, o.y)
        if side == "bottom" and o.y2 <= vr.y and vr.y - o.y2 < threshold_px and lateral_x > 0:
            return True
        if side == "top" and o.y >= vr.y2 and o.y - vr.y2 < threshold_px and lateral_x > 0:
            return True
        if side == "left" and o.x2 <= vr.x and vr.x - o.x2 < threshold_px and lateral_y > 0:
            return True
        if side == "right" and o.x >= vr.x2 and o.x - vr.x2 < threshold_px and lateral_y > 0:
            return True
    return False


# ---------------------------------------------------------------------------
# Visualization layers


def layer_nodes(state: SessionState, viewer: str) -> list:
    """Parallel comparison panels stacked in front of a view.

    The active layer renders on the display plane (z=0) at full opacity
    with the displaced original content behind it at one spacing; remaining
    layers follow in rotated stack order, dimmed. Scrolling rotates the
    active index modulo the stack size.
    """
    me = state.user(viewer)
    cfg = state.config.display
    p = state.config.params
    nodes = []
    for vis_id in sorted(me.toggles):
        layers = me.toggles[vis_id].get("layers")
        if not layers or vis_id == DISPLAY_SCOPE:
            continue
        stack = layers["stack"]
        if not stack:
            raise EmptyStack(f"layer stack for vis {vis_id!r} is empty")
        spec = state.config.spec(vis_id)
        world = rect_to_world(spec.view_rect, cfg)
        n = len(stack)
        active = me.layer_scroll.get(vis_id, 0) % n

        panels = [("layer", active, 0.0, 1.0)]
        panels.append(("original", None, p.layer_spacing_m, p.layer_inactive_opacity))
        for i in range(1, n):
            panels.append(
                ("layer", (active + i) % n, (i + 1) * p.layer_spacing_m,
                 p.layer_inactive_opacity)
            )

        for slot, (role, index, z, opacity) in enumerate(panels):
            if role == "layer":
                entry = stack[index]
                where = RowFilter.from_json(entry["filter"])
                rows = {
                    r for r in state.config.table.row_ids()
                    if where.matches(state.config.table, r)
                }
                marks = build_marks(spec, state.config.table, row_subset=rows)
                label = entry.get("label", f"layer {index}")
                payload_marks = marks.to_json()
            else:
                label = "original"
                payload_marks = state.config.markset(vis_id).to_json()
            corners = quad_from_rect(world, z=z)
            nodes.append(
                _make_node(
                    node_id=f"{viewer}:layer:{vis_id}:{slot}",
                    kind=LAYER,
                    owner=viewer,
                    vis_id=vis_id,
                    position=(world.x + world.w / 2.0, world.y + world.h / 2.0, z),
                    payload={
                        "vis": vis_id,
                        "label": label,
                        "role": role,
                        "stack_index": index,
                        "z_m": z,
                        "opacity": opacity,
                        "active": z == 0.0,
                        "panel": corners.to_json(),
                        "marks": payload_marks,
                    },
                    extent_points=list(corners.corners),
                    cfg=cfg,
                )
            )
    return nodes


# ---------------------------------------------------------------------------
# Magic lenses


def _marks_inside_lens(markset, lens, view_rect: Rect) -> list:
    cx, cy = view_to_display(lens.center, view_rect)
    inside = []
    for mark in markset.marks:
        mx, my = view_to_display(mark_anchor(mark), view_rect)
        if math.hypot(mx - cx, my - cy) <= lens.radius_px:
            inside.append(mark)
    return inside


def lens_nodes(state: SessionState, viewer: str) -> list:
    """A personal lens disc plus the re-rendered marks beneath it.

    Filter mode keeps only marks with a matching row; remap mode recolors
    by another column; de-overlap mode spreads overlapping marks across
    depth so no two share a position within one mark radius. Marks outside
    the disc are untouched.
    """
    me = state.user(viewer)
    cfg = state.config.display
    p = state.config.params
    table = state.config.table
    nodes = []
    for vis_id in sorted(me.lenses):
        lens = me.lenses[vis_id]
        if vis_id not in state.config.specs:
            raise UnknownLens(f"lens references unknown vis {vis_id!r}")
        spec = state.config.spec(vis_id)
        markset = state.config.markset(vis_id)
        center_px = view_to_display(lens.center, spec.view_rect)
        center_world = display_to_world(center_px, cfg)
        radius_m = _px_to_m(lens.radius_px, cfg)
        nodes.append(
            _make_node(
                node_id=f"{viewer}:lens:{vis_id}",
                kind=LENS,
                owner=viewer,
                vis_id=vis_id,
                position=center_world,
                payload={
                    "vis": vis_id,
                    "role": "ring",
                    "center": list(lens.center),
                    "radius_px": lens.radius_px,
                    "radius_m": radius_m,
                    "mode": lens.mode,
                },
                extent_points=[
                    (center_world[0] - radius_m, center_world[1] - radius_m, 0.0),
                    (center_world[0] + radius_m, center_world[1] + radius_m, 0.0),
                ],
                cfg=cfg,
            )
        )

        inside = _marks_inside_lens(markset, lens, spec.view_rect)
        rendered: list[tuple[Mark, float]] = []
        if lens.mode == "filter":
            where = RowFilter.from_json(lens.config.get("filter", {"op": "true"}))
            for mark in inside:
                if any(where.matches(table, r) for r in sorted(mark.row_ids)):
                    rendered.append((mark, 0.0))
        elif lens.mode == "remap":
            column = lens.config.get("column")
            recolor = _category_color_map(table, column) if column else {}
            for mark in inside:
                channels = dict(mark.channels)
                if column:
                    row = min(mark.row_ids)
                    value = table.value(column, row)
                    if value is not None:
                        channels["color"] = recolor[category_label(value)]
                rendered.append((replace(mark, channels=channels), 0.0))
        elif lens.mode == "deoverlap":
            rendered = _deoverlap(inside, spec.view_rect, p.lens_spacing_m, cfg)
        else:
            raise UnknownLens(f"lens on {vis_id!r} has unknown mode {lens.mode!r}")

        for mark, z in rendered:
            px = view_to_display(mark_anchor(mark), spec.view_rect)
            world = display_to_world(px, cfg)
            position = (world[0], world[1], z)
            nodes.append(
                _make_node(
                    node_id=f"{viewer}:lens:{vis_id}:{mark.id}",
                    kind=LENS,
                    owner=viewer,
                    vis_id=vis_id,
                    position=position,
                    payload={
                        "vis": vis_id,
                        "role": "mark",
                        "mark": mark.to_json(),
                        "z_m": z,
                    },
                    extent_points=[position],
                    cfg=cfg,
                )
            )
    return nodes


def _category_color_map(table, column: str) -> dict:
    values = sorted(
        {category_label(v) for v in table.column(column).values if v is not None}
    )
    return {v: i % len(PALETTE) for i, v in enumerate(values)}


def _deoverlap(marks: list, view_rect: Rect, spacing_m: float, cfg: DisplayConfig) -> list:
    """Assign depth levels so overlapping marks separate; deterministic
    greedy order by anchor position then id."""
    anchored = []
    for mark in marks:
        px = view_to_display(mark_anchor(mark), view_rect)
        anchored.append((px, mark))
    anchored.sort(key=lambda t: (t[0][1], t[0][0], t[1].id))
    placed: list[tuple[tuple, int]] = []
    out = []
    for px, mark in anchored:
        level = 0
        while any(
            lvl == level and math.hypot(px[0] - q[0], px[1] - q[1]) < POINT_HIT_RADIUS_PX
            for q, lvl in placed
        ):
            level += 1
        placed.append((px, level))
        out.append((mark, level * spacing_m))
    return out


# ---------------------------------------------------------------------------
# Annotations


def annotation_nodes(state: SessionState, viewer: str) -> list:
    """Strokes the viewer can see, floated just in front of the glass.

    Shared strokes come from the public layer (drawn in their author's pen
    color); unshared strokes only ever appear in their owner's scene.
    """
    me = state.user(viewer)
    cfg = state.config.display
    z = state.config.params.annotation_z_m
    nodes = []
    for stroke, layer_owner in (
        [(s, "public") for s in state.public_strokes]
        + [(s, viewer) for s in me.strokes]
    ):
        spec = state.config.spec(stroke.vis_id)
        world_points = []
        for q in stroke.points:
            px = view_to_display(q, spec.view_rect)
            w = display_to_world(px, cfg)
            world_points.append((w[0], w[1], z))
        nodes.append(
            _make_node(
                node_id=f"{viewer}:anno:{stroke.id}",
                kind=ANNOTATION,
                owner=layer_owner,
                vis_id=stroke.vis_id,
                position=world_points[0],
                payload={
                    "vis": stroke.vis_id,
                    "stroke": stroke.to_json(),
                    "author": stroke.owner,
                    "color": stroke.color,
                    "points_world": [list(p) for p in world_points],
                },
                extent_points=world_points,
                cfg=cfg,
            )
        )
    return nodes


# ---------------------------------------------------------------------------
# Scene composition


def compose_user_scene(state: SessionState, viewer: str) -> ARScene:
    """Compose the viewer's full AR scene from all technique families.

    Families combine in fixed precedence. When the curved screen is active,
    nodes of other techniques whose anchor lies outside the flat window are
    re-mapped through the same curve so combined techniques ride the
    curvature. Node order is deterministic: (precedence, vis, id).
    """
    if viewer not in state.users:
        raise UnknownUser(f"no user {viewer!r} in session")
    me = state.users[viewer]

    curved = curved_screen_nodes(state, viewer)
    others = (
        hinged_nodes(state, viewer)
        + layer_nodes(state, viewer)
        + extended_axis_nodes(state, viewer)
        + embedded_vis_nodes(state, viewer)
        + lens_nodes(state, viewer)
        + link_nodes(state, viewer)
        + annotation_nodes(state, viewer)
    )

    if curved:
        toggles = me.toggles.get(DISPLAY_SCOPE, {})
        mapping = CurvedMapping.for_viewer(
            me.pose.position, state.config.display, state.config.params,
            toggles.get("curved"),
        )
        remapped = []
        for node in others:
            if mapping.is_outside_window(node.position[0]):
                payload = dict(node.payload)
                payload["curved_remap"] = True
                remapped.append(
                    replace(node, position=mapping.map_point(node.position),
                            payload=payload)
                )
            else:
                remapped.append(node)
        others = remapped

    nodes = curved + others
    nodes.sort(key=lambda n: (PRECEDENCE[n.kind], n.vis_id or "", n.id))
    return ARScene(viewer=viewer, seq=state.seq, nodes=tuple(nodes))
