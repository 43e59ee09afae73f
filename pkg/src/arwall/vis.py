"""Visualization model: specs to data marks, axes, legends, and linking.

A VisSpec declares a chart (kind, channel bindings, pixel rectangle on the
display); build_marks turns it plus the shared table into concrete marks
with geometry in view-normalized [0,1]^2 coordinates. Marks carry the row
ids they encode, which makes cross-view linking a plain row-id join.
Generation is deterministic: identical inputs yield byte-identical canonical
serializations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .canon import format_float
from .data import CATEGORICAL, DataTable, RowFilter, filtered_row_ids
from .geometry import Rect, Vec2
from .spatial import DisplayConfig, display_to_world

BAR = "bar"
SCATTER = "scatter"
LINE = "line"
PARALLEL = "parallel_coordinates"
PIE = "pie"
CHART_KINDS = (BAR, SCATTER, LINE, PARALLEL, PIE)

# Categorical color palette; clients index into it.
PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
)

POINT_HIT_RADIUS_PX = 12.0
PIE_RADIUS = 0.45  # of the smaller view dimension


class InvalidBinding(ValueError):
    """A channel binding references a missing column or an invalid kind."""


class OutsideView(ValueError):
    """Hit test point lies outside the visualization rectangle."""


class NonNumericAxis(ValueError):
    """Axis extension requested on an axis without a numeric/temporal column."""


@dataclass(frozen=True)
class VisSpec:
    """Declarative chart definition placed on the display."""

    id: str
    kind: str
    bindings: dict
    view_rect: Rect
    group_by: str | None = None

    def binding(self, channel: str) -> str | None:
        return self.bindings.get(channel)

    def to_json(self) -> dict:
        data = {
            "id": self.id,
            "kind": self.kind,
            "bindings": dict(self.bindings),
            "rect": self.view_rect.to_json(),
        }
        if self.group_by:
            data["group_by"] = self.group_by
        return data

    @classmethod
    def from_json(cls, data: dict) -> "VisSpec":
        return cls(
            id=str(data["id"]),
            kind=str(data["kind"]),
            bindings=dict(data.get("bindings", {})),
            view_rect=Rect.from_json(data["rect"]),
            group_by=data.get("group_by"),
        )


@dataclass(frozen=True)
class Mark:
    """One data mark: geometry in view-normalized [0,1]^2 plus resolved channels."""

    id: str
    vis_id: str
    row_ids: frozenset
    shape: str  # "rect" | "point" | "polyline" | "sector"
    geometry: dict
    channels: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "vis": self.vis_id,
            "rows": sorted(self.row_ids),
            "shape": self.shape,
            "geometry": self.geometry,
            "channels": self.channels,
        }


@dataclass(frozen=True)
class AxisModel:
    """An axis of a view: tick positions in [0,1] along the axis plus labels.

    ``offset`` places interior axes (parallel coordinates) along the
    orthogonal direction; edge axes use offset 0.
    """

    vis_id: str
    side: str  # "left" | "right" | "top" | "bottom"
    column: str
    ticks: tuple
    pixel_span: float
    offset: float = 0.0

    def to_json(self) -> dict:
        return {
            "vis": self.vis_id,
            "side": self.side,
            "column": self.column,
            "ticks": [{"pos": p, "label": l} for p, l in self.ticks],
            "pixel_span": self.pixel_span,
            "offset": self.offset,
        }


@dataclass(frozen=True)
class MarkSet:
    """Everything build_marks derives from one spec: marks, axes, legend."""

    vis_id: str
    marks: tuple
    axes: tuple
    legend: tuple

    def mark(self, mark_id: str) -> Mark:
        for m in self.marks:
            if m.id == mark_id:
                return m
        raise KeyError(f"no mark {mark_id!r} in vis {self.vis_id!r}")

    def to_json(self) -> dict:
        return {
            "vis": self.vis_id,
            "marks": [m.to_json() for m in self.marks],
            "axes": [a.to_json() for a in self.axes],
            "legend": [{"category": c, "color": i} for c, i in self.legend],
        }


def category_label(value) -> str:
    """Stable text form of a category value for ids and labels."""
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _require_column(spec: VisSpec, table: DataTable, name: str, kinds, channel: str):
    if not table.has_column(name):
        raise InvalidBinding(f"vis {spec.id!r}: channel {channel} binds missing column {name!r}")
    col = table.column(name)
    if kinds and col.kind not in kinds:
        raise InvalidBinding(
            f"vis {spec.id!r}: channel {channel} needs {'/'.join(kinds)} column, "
            f"{name!r} is {col.kind}"
        )
    return col


def validate_spec(spec: VisSpec, table: DataTable) -> None:
    """Check bindings against the table; raises InvalidBinding."""
    if spec.kind not in CHART_KINDS:
        raise InvalidBinding(f"vis {spec.id!r}: unknown chart kind {spec.kind!r}")
    b = spec.bindings
    if spec.kind == BAR:
        key = spec.group_by or b.get("x")
        if not key:
            raise InvalidBinding(f"vis {spec.id!r}: bar chart needs group_by or x binding")
        _require_column(spec, table, key, None, "x")
        if b.get("y"):
            _require_column(spec, table, b["y"], ("numeric",), "y")
    elif spec.kind in (SCATTER, LINE):
        for ch in ("x", "y"):
            if not b.get(ch):
                raise InvalidBinding(f"vis {spec.id!r}: {spec.kind} needs an {ch} binding")
            _require_column(spec, table, b[ch], ("numeric", "temporal"), ch)
        if b.get("size"):
            _require_column(spec, table, b["size"], ("numeric",), "size")
    elif spec.kind == PARALLEL:
        axes = b.get("axes")
        if not isinstance(axes, (list, tuple)) or len(axes) < 2:
            raise InvalidBinding(f"vis {spec.id!r}: parallel coordinates need >=2 bound axes")
        for name in axes:
            _require_column(spec, table, name, ("numeric", "temporal"), "axes")
    elif spec.kind == PIE:
        key = spec.group_by or b.get("color")
        if not key:
            raise InvalidBinding(f"vis {spec.id!r}: pie chart needs group_by or color binding")
        _require_column(spec, table, key, (CATEGORICAL,), "color")
    if b.get("color") and spec.kind != PIE:
        _require_column(spec, table, b["color"], None, "color")


def _scale(values: list[float]) -> tuple[float, float]:
    """Min-max scale domain; a degenerate domain maps everything to 0.5."""
    lo, hi = min(values), max(values)
    return lo, hi


def _norm(v: float, lo: float, hi: float) -> float:
    if hi == lo:
        return 0.5
    return (v - lo) / (hi - lo)


def _numeric_ticks(lo: float, hi: float, n: int = 5) -> tuple:
    if hi == lo:
        return ((0.5, format_float(lo)),)
    ticks = []
    for i in range(n):
        v = lo + (hi - lo) * i / (n - 1)
        ticks.append((i / (n - 1), format_float(v)))
    return tuple(ticks)


def _sorted_categories(table: DataTable, column: str, rows: list[int]) -> list:
    values = {table.value(column, r) for r in rows if table.value(column, r) is not None}
    return sorted(values, key=lambda v: (0, v) if isinstance(v, float) else (1, str(v)))


def _color_channels(spec: VisSpec, table: DataTable, rows: list[int]):
    """Resolver for the color channel: categorical -> palette index,
    numeric -> normalized value; returns (fn(row)->value|None, legend)."""
    name = spec.binding("color")
    if not name or spec.kind == PIE:
        return (lambda r: None), ()
    col = table.column(name)
    if col.kind == CATEGORICAL:
        cats = _sorted_categories(table, name, rows)
        index = {c: i for i, c in enumerate(cats)}
        legend = tuple((category_label(c), index[c] % len(PALETTE)) for c in cats)
        return (
            lambda r: None if col.values[r] is None else index[col.values[r]] % len(PALETTE)
        ), legend
    present = [col.numeric_value(r) for r in rows if col.values[r] is not None]
    if not present:
        return (lambda r: None), ()
    lo, hi = _scale(present)
    return (
        lambda r: None if col.values[r] is None else _norm(col.numeric_value(r), lo, hi)
    ), ()


def build_marks(
    spec: VisSpec,
    table: DataTable,
    row_subset: set | None = None,
) -> MarkSet:
    """Generate the MarkSet for a spec over the table (or a row subset).

    Row ids always refer to the original table, so subset marks stay linkable.
    Scales are computed over the displayed rows. An empty table or subset
    yields an empty MarkSet.
    """
    if table.row_count == 0:
        # kinds are uninferable without values; only require bound columns
        for value in spec.bindings.values():
            names = value if isinstance(value, (list, tuple)) else [value]
            for name in names:
                if not table.has_column(name):
                    raise InvalidBinding(
                        f"vis {spec.id!r}: binding references missing column {name!r}"
                    )
        return MarkSet(spec.id, (), (), ())
    validate_spec(spec, table)
    rows = [r for r in table.row_ids() if row_subset is None or r in row_subset]
    if not rows:
        return MarkSet(spec.id, (), (), ())

    builder = {
        BAR: _build_bar,
        SCATTER: _build_scatter,
        LINE: _build_line,
        PARALLEL: _build_parallel,
        PIE: _build_pie,
    }[spec.kind]
    marks, axes, legend = builder(spec, table, rows)
    return MarkSet(spec.id, tuple(marks), tuple(axes), tuple(legend))


def _build_bar(spec: VisSpec, table: DataTable, rows: list[int]):
    key = spec.group_by or spec.binding("x")
    y_name = spec.binding("y")
    cats = _sorted_categories(table, key, rows)
    if not cats:
        return [], [], ()
    by_cat: dict = {c: [] for c in cats}
    for r in rows:
        v = table.value(key, r)
        if v is not None:
            by_cat[v].append(r)

    values = {}
    for c in cats:
        if y_name:
            ycol = table.column(y_name)
            values[c] = sum(ycol.values[r] for r in by_cat[c] if ycol.values[r] is not None)
        else:
            values[c] = float(len(by_cat[c]))
    vmax = max(values.values())

    slot = 1.0 / len(cats)
    marks = []
    for i, c in enumerate(cats):
        height = values[c] / vmax if vmax > 0 else 0.0
        marks.append(
            Mark(
                id=f"{spec.id}:bar:{category_label(c)}",
                vis_id=spec.id,
                row_ids=frozenset(by_cat[c]),
                shape="rect",
                geometry={
                    "x": i * slot + 0.1 * slot,
                    "y": 0.0,
                    "w": 0.8 * slot,
                    "h": max(0.0, min(1.0, height)),
                },
                channels={"value": values[c], "color": i % len(PALETTE)},
            )
        )

    bottom = AxisModel(
        vis_id=spec.id,
        side="bottom",
        column=key,
        ticks=tuple(((i + 0.5) * slot, category_label(c)) for i, c in enumerate(cats)),
        pixel_span=spec.view_rect.w,
    )
    left = AxisModel(
        vis_id=spec.id,
        side="left",
        column=y_name or "count",
        ticks=_numeric_ticks(0.0, vmax),
        pixel_span=spec.view_rect.h,
    )
    return marks, [bottom, left], ()


def _build_scatter(spec: VisSpec, table: DataTable, rows: list[int]):
    xcol = table.column(spec.binding("x"))
    ycol = table.column(spec.binding("y"))
    shown = [r for r in rows if xcol.values[r] is not None and ycol.values[r] is not None]
    if not shown:
        return [], [], ()
    xs = [xcol.numeric_value(r) for r in shown]
    ys = [ycol.numeric_value(r) for r in shown]
    xlo, xhi = _scale(xs)
    ylo, yhi = _scale(ys)
    color_of, legend = _color_channels(spec, table, shown)

    size_name = spec.binding("size")
    size_of = lambda r: None
    if size_name:
        scol = table.column(size_name)
        present = [scol.values[r] for r in shown if scol.values[r] is not None]
        if present:
            slo, shi = _scale(present)
            size_of = lambda r: (
                None if scol.values[r] is None else _norm(scol.values[r], slo, shi)
            )

    marks = []
    for r in shown:
        channels = {}
        c = color_of(r)
        if c is not None:
            channels["color"] = c
        s = size_of(r)
        if s is not None:
            channels["size"] = s
        marks.append(
            Mark(
                id=f"{spec.id}:pt:{r}",
                vis_id=spec.id,
                row_ids=frozenset([r]),
                shape="point",
                geometry={
                    "x": _norm(xcol.numeric_value(r), xlo, xhi),
                    "y": _norm(ycol.numeric_value(r), ylo, yhi),
                },
                channels=channels,
            )
        )
    axes = [
        AxisModel(spec.id, "bottom", xcol.name, _numeric_ticks(xlo, xhi), spec.view_rect.w),
        AxisModel(spec.id, "left", ycol.name, _numeric_ticks(ylo, yhi), spec.view_rect.h),
    ]
    return marks, axes, legend


def _build_line(spec: VisSpec, table: DataTable, rows: list[int]):
    xcol = table.column(spec.binding("x"))
    ycol = table.column(spec.binding("y"))
    series_name = spec.binding("color")
    shown = [r for r in rows if xcol.values[r] is not None and ycol.values[r] is not None]
    if not shown:
        return [], [], ()
    xlo, xhi = _scale([xcol.numeric_value(r) for r in shown])
    ylo, yhi = _scale([ycol.numeric_value(r) for r in shown])

    if series_name:
        series_values = _sorted_categories(table, series_name, shown)
        groups = [
            (v, [r for r in shown if table.value(series_name, r) == v]) for v in series_values
        ]
        legend = tuple(
            (category_label(v), i % len(PALETTE)) for i, v in enumerate(series_values)
        )
    else:
        groups = [(None, shown)]
        legend = ()

    marks = []
    for i, (series, members) in enumerate(groups):
        if not members:
            continue
        ordered = sorted(members, key=lambda r: (xcol.numeric_value(r), r))
        points = [
            [
                _norm(xcol.numeric_value(r), xlo, xhi),
                _norm(ycol.numeric_value(r), ylo, yhi),
            ]
            for r in ordered
        ]
        label = category_label(series) if series is not None else "all"
        channels = {"color": i % len(PALETTE)} if series is not None else {}
        marks.append(
            Mark(
                id=f"{spec.id}:line:{label}",
                vis_id=spec.id,
                row_ids=frozenset(members),
                shape="polyline",
                geometry={"points": points},
                channels=channels,
            )
        )
    axes = [
        AxisModel(spec.id, "bottom", xcol.name, _numeric_ticks(xlo, xhi), spec.view_rect.w),
        AxisModel(spec.id, "left", ycol.name, _numeric_ticks(ylo, yhi), spec.view_rect.h),
    ]
    return marks, axes, legend


def _build_parallel(spec: VisSpec, table: DataTable, rows: list[int]):
    axis_names = list(spec.bindings["axes"])
    cols = [table.column(n) for n in axis_names]
    shown = [r for r in rows if all(c.values[r] is not None for c in cols)]
    if not shown:
        return [], [], ()
    scales = []
    for c in cols:
        vals = [c.numeric_value(r) for r in shown]
        scales.append(_scale(vals))
    color_of, legend = _color_channels(spec, table, shown)

    k = len(cols)
    marks = []
    for r in shown:
        points = [
            [i / (k - 1), _norm(cols[i].numeric_value(r), *scales[i])] for i in range(k)
        ]
        channels = {}
        c = color_of(r)
        if c is not None:
            channels["color"] = c
        marks.append(
            Mark(
                id=f"{spec.id}:pcp:{r}",
                vis_id=spec.id,
                row_ids=frozenset([r]),
                shape="polyline",
                geometry={"points": points},
                channels=channels,
            )
        )
    axes = [
        AxisModel(
            vis_id=spec.id,
            side="left",
            column=cols[i].name,
            ticks=_numeric_ticks(*scales[i]),
            pixel_span=spec.view_rect.h,
            offset=i / (k - 1),
        )
        for i in range(k)
    ]
    return marks, axes, legend


def _build_pie(spec: VisSpec, table: DataTable, rows: list[int]):
    key = spec.group_by or spec.binding("color")
    cats = _sorted_categories(table, key, rows)
    by_cat: dict = {c: [] for c in cats}
    for r in rows:
        v = table.value(key, r)
        if v is not None:
            by_cat[v].append(r)
    total = sum(len(v) for v in by_cat.values())
    if total == 0:
        return [], [], ()

    marks = []
    start = 0.0
    for i, c in enumerate(cats):
        span = 360.0 * len(by_cat[c]) / total
        marks.append(
            Mark(
                id=f"{spec.id}:sector:{category_label(c)}",
                vis_id=spec.id,
                row_ids=frozenset(by_cat[c]),
                shape="sector",
                geometry={
                    "cx": 0.5,
                    "cy": 0.5,
                    "radius": PIE_RADIUS,
                    "start_deg": start,
                    "span_deg": span,
                },
                channels={"color": i % len(PALETTE), "count": len(by_cat[c])},
            )
        )
        start += span
    legend = tuple((category_label(c), i % len(PALETTE)) for i, c in enumerate(cats))
    return marks, [], legend


def axis_column(spec: VisSpec, side: str) -> str:
    """The numeric/temporal column behind a view's axis side.

    Left/right extend the y dimension, top/bottom the x dimension; bar
    charts only have a data column along their category axis when it is
    numeric, and never along the count axis.
    """
    if side in ("left", "right"):
        channel = "y"
    elif side in ("top", "bottom"):
        channel = "x"
    else:
        raise ValueError(f"unknown axis side {side!r}")
    if spec.kind == PARALLEL:
        axes = spec.bindings.get("axes", ())
        name = axes[0] if channel == "y" and axes else None
    else:
        name = spec.binding(channel)
    if not name:
        raise NonNumericAxis(
            f"vis {spec.id!r} has no data column on its {side} axis"
        )
    return name


def linked_marks(selected_rows: set, target: MarkSet) -> set:
    """Ids of the target marks encoding any of the selected rows."""
    if not selected_rows:
        return set()
    selected = frozenset(selected_rows)
    return {m.id for m in target.marks if m.row_ids & selected}


def mark_anchor(mark: Mark) -> Vec2:
    """Representative view-normalized point of a mark (link endpoints,
    embedded extrusion footprints)."""
    g = mark.geometry
    if mark.shape == "point":
        return (g["x"], g["y"])
    if mark.shape == "rect":
        return (g["x"] + g["w"] / 2.0, g["y"] + g["h"] / 2.0)
    if mark.shape == "polyline":
        p = g["points"][len(g["points"]) // 2]
        return (p[0], p[1])
    if mark.shape == "sector":
        mid = math.radians(g["start_deg"] + g["span_deg"] / 2.0)
        return (
            g["cx"] + 0.5 * g["radius"] * math.cos(mid),
            g["cy"] + 0.5 * g["radius"] * math.sin(mid),
        )
    raise ValueError(f"unknown mark shape {mark.shape!r}")


def view_to_display(p: Vec2, view_rect: Rect) -> Vec2:
    """View-normalized [0,1]^2 point to display pixels."""
    return (view_rect.x + p[0] * view_rect.w, view_rect.y + p[1] * view_rect.h)


def mark_world_position(mark: Mark, spec: VisSpec, cfg: DisplayConfig):
    """World position of a mark's anchor on the display plane."""
    return display_to_world(view_to_display(mark_anchor(mark), spec.view_rect), cfg)


def _dist_point_segment(p: Vec2, a: Vec2, b: Vec2) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    if dx == 0 and dy == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def hit_test(spec: VisSpec, markset: MarkSet, p: Vec2) -> str | None:
    """Topmost mark at a display-pixel point, or None over empty plot area.

    Point marks hit within a 12 px disc, polylines within 12 px of any
    segment; ties go to the higher mark index.
    """
    rect = spec.view_rect
    if not rect.contains(p):
        raise OutsideView(f"point {p} outside view {spec.id!r}")
    nx = (p[0] - rect.x) / rect.w
    ny = (p[1] - rect.y) / rect.h

    hit: str | None = None
    for mark in markset.marks:
        g = mark.geometry
        if mark.shape == "rect":
            if g["x"] <= nx <= g["x"] + g["w"] and g["y"] <= ny <= g["y"] + g["h"]:
                hit = mark.id
        elif mark.shape == "point":
            dx = (nx - g["x"]) * rect.w
            dy = (ny - g["y"]) * rect.h
            if math.hypot(dx, dy) <= POINT_HIT_RADIUS_PX:
                hit = mark.id
        elif mark.shape == "polyline":
            pts = [(q[0] * rect.w, q[1] * rect.h) for q in g["points"]]
            probe = (nx * rect.w, ny * rect.h)
            for a, b in zip(pts, pts[1:]):
                if _dist_point_segment(probe, a, b) <= POINT_HIT_RADIUS_PX:
                    hit = mark.id
                    break
        elif mark.shape == "sector":
            # Sectors render as true circles in pixel space (radius from the
            # smaller view dimension); test angle and radius there.
            dx = (nx - g["cx"]) * rect.w
            dy = (ny - g["cy"]) * rect.h
            radius_px = g["radius"] * min(rect.w, rect.h)
            if math.hypot(dx, dy) <= radius_px:
                angle = math.degrees(math.atan2(dy, dx)) % 360.0
                rel = (angle - g["start_deg"]) % 360.0
                if rel <= g["span_deg"]:
                    hit = mark.id
    return hit
