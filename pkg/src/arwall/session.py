"""Authoritative session state and its event transitions.

One server process owns a SessionState; input events are applied strictly
serially and each application bumps the sequence number by exactly one and
yields a sparse delta (the replaced user/public subtrees). Everything a user
creates lives in their personal layer and stays invisible to others until
explicitly shared; sharing is one-way personal -> public.

All transitions are deterministic functions of (state, event), so a recorded
event log replayed on a fresh state reproduces the final state bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

from .data import CATEGORICAL, DataTable, RowFilter
from .params import AugmentParams
from .spatial import DisplayConfig, Pose
from .vis import MarkSet, NonNumericAxis, VisSpec, axis_column

# Pen colors by join order; the first two analysts write in green and blue.
PEN_PALETTE = ("#2ca02c", "#1f77b4", "#d62728", "#9467bd", "#8c564b", "#e377c2")

DISPLAY_SCOPE = "*"  # vis id meaning "the whole display" for technique toggles

TECHNIQUES = (
    "embedded",
    "hinged",
    "curved",
    "link_filter",
    "axis_view",
    "layers",
)


class UnknownUser(ValueError):
    """Event or query references a user that is not in the session."""


class UnknownVis(ValueError):
    """Event references a visualization id absent from the layout."""


class UnknownStroke(ValueError):
    """Share request references a stroke the user does not own."""


class UnknownLens(ValueError):
    """Lens operation references a vis where the user has no lens."""


class UnknownTechnique(ValueError):
    """Technique toggle names an unsupported technique."""


class InvalidStroke(ValueError):
    """Pen stroke violates the >=2 points in [0,1]^2 contract."""


class EmptyStack(ValueError):
    """Layer stack configured or rendered with zero layers."""


class StaleEvent(Exception):
    """Client state is too far behind; resync with a snapshot instead."""


@dataclass(frozen=True)
class SessionConfig:
    """Static per-session configuration shared by server and clients."""

    display: DisplayConfig
    specs: dict  # vis id -> VisSpec
    table: DataTable
    marksets: dict  # vis id -> MarkSet
    params: AugmentParams = field(default_factory=AugmentParams)

    def spec(self, vis_id: str) -> VisSpec:
        try:
            return self.specs[vis_id]
        except KeyError:
            raise UnknownVis(f"no visualization {vis_id!r} in layout") from None

    def markset(self, vis_id: str) -> MarkSet:
        if vis_id not in self.marksets:
            raise UnknownVis(f"no visualization {vis_id!r} in layout")
        return self.marksets[vis_id]

    def model_json(self) -> dict:
        """The static display model sent to clients on welcome."""
        return {
            "display": self.display.to_json(),
            "views": [self.specs[v].to_json() for v in sorted(self.specs)],
            "marks": {v: self.marksets[v].to_json() for v in sorted(self.marksets)},
            "params": self.params.to_json(),
        }


@dataclass(frozen=True)
class Stroke:
    """A pen annotation polyline in view-normalized coordinates."""

    id: str
    owner: str
    vis_id: str
    points: tuple  # ((x, y), ...) with at least 2 points in [0,1]^2
    color: str
    shared: bool = False

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "owner": self.owner,
            "vis": self.vis_id,
            "points": [list(p) for p in self.points],
            "color": self.color,
            "shared": self.shared,
        }


@dataclass(frozen=True)
class LensState:
    """One user's movable lens on a vis: disc position plus filter config."""

    vis_id: str
    center: tuple  # view-normalized (x, y)
    radius_px: float
    mode: str  # "filter" | "remap" | "deoverlap"
    config: dict  # mode-specific: {"filter": <RowFilter json>} or {"column": ...}

    def to_json(self) -> dict:
        return {
            "vis": self.vis_id,
            "center": list(self.center),
            "radius_px": self.radius_px,
            "mode": self.mode,
            "config": dict(self.config),
        }


@dataclass
class UserState:
    """Everything personal to one analyst."""

    user: str
    pen_color: str
    pose: Pose
    selections: dict = field(default_factory=dict)  # vis id -> set of row ids
    strokes: list = field(default_factory=list)  # unshared personal strokes
    lenses: dict = field(default_factory=dict)  # vis id -> LensState
    toggles: dict = field(default_factory=dict)  # vis id -> {toggle key -> params}
    layer_scroll: dict = field(default_factory=dict)  # vis id -> active index
    stroke_counter: int = 0

    def clone(self) -> "UserState":
        return UserState(
            user=self.user,
            pen_color=self.pen_color,
            pose=self.pose,
            selections={v: set(rows) for v, rows in self.selections.items()},
            strokes=list(self.strokes),
            lenses=dict(self.lenses),
            toggles={v: dict(t) for v, t in self.toggles.items()},
            layer_scroll=dict(self.layer_scroll),
            stroke_counter=self.stroke_counter,
        )

    def to_json(self) -> dict:
        return {
            "user": self.user,
            "pen_color": self.pen_color,
            "pose": self.pose.to_json(),
            "selections": {v: sorted(rows) for v, rows in sorted(self.selections.items())},
            "strokes": [s.to_json() for s in self.strokes],
            "lenses": {v: l.to_json() for v, l in sorted(self.lenses.items())},
            "toggles": {v: {k: t[k] for k in sorted(t)} for v, t in sorted(self.toggles.items())},
            "layer_scroll": dict(sorted(self.layer_scroll.items())),
            "stroke_counter": self.stroke_counter,
        }


@dataclass
class SessionState:
    """The authoritative state; mutated only through apply_event."""

    config: SessionConfig
    seq: int = 0
    users: dict = field(default_factory=dict)  # user id -> UserState
    public_strokes: list = field(default_factory=list)
    join_counter: int = 0

    def clone(self) -> "SessionState":
        return SessionState(
            config=self.config,
            seq=self.seq,
            users={u: s.clone() for u, s in self.users.items()},
            public_strokes=list(self.public_strokes),
            join_counter=self.join_counter,
        )

    def user(self, user_id: str) -> UserState:
        try:
            return self.users[user_id]
        except KeyError:
            raise UnknownUser(f"no user {user_id!r} in session") from None

    def public_json(self) -> dict:
        return {
            "strokes": [s.to_json() for s in self.public_strokes],
            "views": sorted(self.config.specs),
        }

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "users": {u: self.users[u].to_json() for u in sorted(self.users)},
            "public": self.public_json(),
        }


# ---------------------------------------------------------------------------
# Input events


@dataclass(frozen=True)
class Event:
    user: str

    kind = "?"

    def payload_json(self) -> dict:
        return {}

    def to_json(self) -> dict:
        data = {"kind": self.kind, "user": self.user}
        data.update(self.payload_json())
        return data


@dataclass(frozen=True)
class Join(Event):
    kind = "join"


@dataclass(frozen=True)
class Leave(Event):
    kind = "leave"


@dataclass(frozen=True)
class PoseEvent(Event):
    position: tuple = (0.0, 0.0, 1.5)
    facing: tuple = (0.0, 0.0, -1.0)
    kind = "pose"

    def payload_json(self) -> dict:
        return {"position": list(self.position), "facing": list(self.facing)}


@dataclass(frozen=True)
class Select(Event):
    vis: str = ""
    rows: tuple = ()
    mode: str = "replace"  # "replace" | "toggle"
    kind = "select"

    def payload_json(self) -> dict:
        return {"vis": self.vis, "rows": sorted(self.rows), "mode": self.mode}


@dataclass(frozen=True)
class TechniqueToggle(Event):
    vis: str = ""
    technique: str = ""
    params: dict = field(default_factory=dict)
    kind = "toggle"

    def payload_json(self) -> dict:
        return {"vis": self.vis, "technique": self.technique, "params": dict(self.params)}


@dataclass(frozen=True)
class PenStroke(Event):
    vis: str = ""
    points: tuple = ()
    color: str | None = None
    kind = "stroke"

    def payload_json(self) -> dict:
        data: dict = {"vis": self.vis, "points": [list(p) for p in self.points]}
        if self.color:
            data["color"] = self.color
        return data


@dataclass(frozen=True)
class ShareAnnotation(Event):
    stroke_id: str = ""
    kind = "share"

    def payload_json(self) -> dict:
        return {"stroke": self.stroke_id}


@dataclass(frozen=True)
class ScrollLayers(Event):
    vis: str = ""
    delta: int = 1
    kind = "scroll"

    def payload_json(self) -> dict:
        return {"vis": self.vis, "delta": self.delta}


@dataclass(frozen=True)
class LensMove(Event):
    vis: str = ""
    center: tuple = (0.5, 0.5)
    kind = "lens_move"

    def payload_json(self) -> dict:
        return {"vis": self.vis, "center": list(self.center)}


@dataclass(frozen=True)
class LensConfigure(Event):
    vis: str = ""
    params: dict = field(default_factory=dict)
    kind = "lens_config"

    def payload_json(self) -> dict:
        return {"vis": self.vis, "params": dict(self.params)}


_EVENT_KINDS = {
    cls.kind: cls
    for cls in (
        Join, Leave, PoseEvent, Select, TechniqueToggle, PenStroke,
        ShareAnnotation, ScrollLayers, LensMove, LensConfigure,
    )
}


def event_from_json(data: dict) -> Event:
    kind = data.get("kind")
    user = data.get("user")
    if kind not in _EVENT_KINDS:
        raise ValueError(f"unknown event kind {kind!r}")
    if not user:
        raise ValueError("event is missing the user field")
    if kind == "join":
        return Join(user)
    if kind == "leave":
        return Leave(user)
    if kind == "pose":
        return PoseEvent(
            user,
            position=tuple(float(c) for c in data["position"]),
            facing=tuple(float(c) for c in data.get("facing", (0.0, 0.0, -1.0))),
        )
    if kind == "select":
        return Select(user, vis=data["vis"], rows=tuple(int(r) for r in data["rows"]),
                      mode=data.get("mode", "replace"))
    if kind == "toggle":
        return TechniqueToggle(user, vis=data["vis"], technique=data["technique"],
                               params=dict(data.get("params", {})))
    if kind == "stroke":
        return PenStroke(user, vis=data["vis"],
                         points=tuple(tuple(float(c) for c in p) for p in data["points"]),
                         color=data.get("color"))
    if kind == "share":
        return ShareAnnotation(user, stroke_id=data["stroke"])
    if kind == "scroll":
        return ScrollLayers(user, vis=data["vis"], delta=int(data["delta"]))
    if kind == "lens_move":
        return LensMove(user, vis=data["vis"], center=tuple(float(c) for c in data["center"]))
    return LensConfigure(user, vis=data["vis"], params=dict(data.get("params", {})))


# ---------------------------------------------------------------------------
# Transitions


def _require_vis(state: SessionState, vis_id: str) -> None:
    if vis_id != DISPLAY_SCOPE and vis_id not in state.config.specs:
        raise UnknownVis(f"no visualization {vis_id!r} in layout")


def _toggle_key(technique: str, params: dict) -> str:
    if technique == "axis_view":
        side = params.get("side")
        if side not in ("left", "right", "top", "bottom"):
            raise ValueError(f"axis_view toggle needs a side, got {side!r}")
        return f"axis_view:{side}"
    return technique


def _apply_toggle(state: SessionState, ev: TechniqueToggle, warnings: list) -> None:
    if ev.technique not in TECHNIQUES:
        raise UnknownTechnique(f"unknown technique {ev.technique!r}")
    if ev.technique == "curved" and ev.vis != DISPLAY_SCOPE:
        raise ValueError("curved screen toggles at display scope (vis '*')")
    _require_vis(state, ev.vis)
    user = state.user(ev.user)
    per_vis = user.toggles.setdefault(ev.vis, {})
    key = _toggle_key(ev.technique, ev.params)

    if ev.technique == "axis_view" and key not in per_vis:
        column = axis_column(state.config.spec(ev.vis), ev.params["side"])
        if state.config.table.column(column).kind == CATEGORICAL:
            raise NonNumericAxis(
                f"axis column {column!r} of vis {ev.vis!r} is categorical"
            )

    if ev.technique == "embedded":
        mark = ev.params.get("mark")
        dimension = ev.params.get("dimension")
        if not mark or not dimension:
            raise ValueError("embedded toggle needs 'mark' and 'dimension' params")
        target = state.config.markset(ev.vis).mark(mark)
        col = state.config.table.column(dimension)
        if all(col.values[r] is None for r in target.row_ids):
            warnings.append(
                f"mark {mark!r} has no values in {dimension!r}; embedded vis will be omitted"
            )
        current = per_vis.get(key, {})
        marks = list(current.get("marks", []))
        if mark in marks:
            marks.remove(mark)
        else:
            marks.append(mark)
            marks.sort()
        if marks:
            per_vis[key] = {"dimension": dimension, "marks": marks}
        else:
            per_vis.pop(key, None)
    elif ev.technique == "layers":
        if key in per_vis:
            per_vis.pop(key)
            user.layer_scroll.pop(ev.vis, None)
        else:
            stack = ev.params.get("stack")
            if not stack:
                raise EmptyStack(f"layer stack for vis {ev.vis!r} is empty")
            for entry in stack:
                RowFilter.from_json(entry["filter"])  # validate early
            per_vis[key] = {"stack": list(stack)}
    else:
        if key in per_vis:
            per_vis.pop(key)
        else:
            per_vis[key] = dict(ev.params)
    if not per_vis:
        user.toggles.pop(ev.vis, None)


def _apply_lens_config(state: SessionState, ev: LensConfigure) -> None:
    _require_vis(state, ev.vis)
    user = state.user(ev.user)
    params = ev.params
    existing = user.lenses.get(ev.vis)
    if params.get("active") is False:
        if existing is None:
            raise UnknownLens(f"user {ev.user!r} has no lens on vis {ev.vis!r}")
        user.lenses.pop(ev.vis)
        return
    lens = existing or LensState(
        vis_id=ev.vis,
        center=(0.5, 0.5),
        radius_px=state.config.params.lens_radius_px,
        mode="filter",
        config={"filter": {"op": "true"}},
    )
    if "center" in params:
        lens = replace(lens, center=tuple(float(c) for c in params["center"]))
    if "radius_px" in params:
        lens = replace(lens, radius_px=float(params["radius_px"]))
    if "mode" in params:
        mode = params["mode"]
        if mode not in ("filter", "remap", "deoverlap"):
            raise ValueError(f"unknown lens mode {mode!r}")
        lens = replace(lens, mode=mode)
    if "config" in params:
        lens = replace(lens, config=dict(params["config"]))
    if lens.mode == "filter":
        RowFilter.from_json(lens.config.get("filter", {"op": "true"}))
    user.lenses[ev.vis] = lens


def apply_event(state: SessionState, event: Event) -> tuple[SessionState, dict]:
    """Apply one event, returning the successor state and a sparse delta.

    Pure with respect to the input state. The delta carries the replaced
    user subtrees (None for a departed user) and the public layer when it
    changed; applying it to the state at base_seq yields base_seq + 1.
    """
    new = state.clone()
    changed_users: list[str] = []
    removed_users: list[str] = []
    warnings: list[str] = []
    public_changed = False

    if isinstance(event, Join):
        if event.user not in new.users:
            cfg = new.config.display
            new.users[event.user] = UserState(
                user=event.user,
                pen_color=PEN_PALETTE[new.join_counter % len(PEN_PALETTE)],
                pose=Pose(
                    user=event.user,
                    position=(cfg.width_m / 2.0, cfg.height_m / 2.0, 1.5),
                ),
            )
            new.join_counter += 1
            changed_users.append(event.user)
    elif isinstance(event, Leave):
        new.user(event.user)
        del new.users[event.user]
        removed_users.append(event.user)
    elif isinstance(event, PoseEvent):
        user = new.user(event.user)
        norm = math.sqrt(sum(c * c for c in event.facing))
        if norm == 0.0 or not all(math.isfinite(c) for c in event.position):
            raise ValueError("pose needs finite position and a nonzero facing vector")
        facing = tuple(c / norm for c in event.facing)
        user.pose = Pose(user=event.user, position=tuple(event.position), facing=facing)
        changed_users.append(event.user)
    elif isinstance(event, Select):
        user = new.user(event.user)
        _require_vis(new, event.vis)
        rows = set(int(r) for r in event.rows)
        bad = [r for r in rows if not (0 <= r < new.config.table.row_count)]
        if bad:
            raise ValueError(f"selection references unknown rows {sorted(bad)}")
        if event.mode == "replace":
            result = rows
        elif event.mode == "toggle":
            result = user.selections.get(event.vis, set()) ^ rows
        else:
            raise ValueError(f"unknown selection mode {event.mode!r}")
        if result:
            user.selections[event.vis] = result
        else:
            user.selections.pop(event.vis, None)
        changed_users.append(event.user)
    elif isinstance(event, TechniqueToggle):
        _apply_toggle(new, event, warnings)
        changed_users.append(event.user)
    elif isinstance(event, PenStroke):
        user = new.user(event.user)
        _require_vis(new, event.vis)
        if len(event.points) < 2:
            raise InvalidStroke("a stroke needs at least 2 points")
        for p in event.points:
            if not (0.0 <= p[0] <= 1.0 and 0.0 <= p[1] <= 1.0):
                raise InvalidStroke(f"stroke point {p} outside [0,1]^2")
        stroke = Stroke(
            id=f"{event.user}:s{user.stroke_counter}",
            owner=event.user,
            vis_id=event.vis,
            points=tuple(tuple(p) for p in event.points),
            color=event.color or user.pen_color,
        )
        user.stroke_counter += 1
        user.strokes.append(stroke)
        changed_users.append(event.user)
    elif isinstance(event, ShareAnnotation):
        user = new.user(event.user)
        match = [s for s in user.strokes if s.id == event.stroke_id]
        if not match:
            raise UnknownStroke(f"user {event.user!r} owns no stroke {event.stroke_id!r}")
        stroke = replace(match[0], shared=True)
        user.strokes = [s for s in user.strokes if s.id != event.stroke_id]
        new.public_strokes.append(stroke)
        changed_users.append(event.user)
        public_changed = True
    elif isinstance(event, ScrollLayers):
        user = new.user(event.user)
        _require_vis(new, event.vis)
        stack = user.toggles.get(event.vis, {}).get("layers", {}).get("stack")
        if stack:
            current = user.layer_scroll.get(event.vis, 0)
            user.layer_scroll[event.vis] = (current + event.delta) % len(stack)
            changed_users.append(event.user)
    elif isinstance(event, LensMove):
        user = new.user(event.user)
        _require_vis(new, event.vis)
        existing = user.lenses.get(event.vis)
        if existing is None:
            _apply_lens_config(new, LensConfigure(event.user, vis=event.vis,
                                                  params={"center": event.center}))
        else:
            user.lenses[event.vis] = replace(existing, center=tuple(event.center))
        changed_users.append(event.user)
    elif isinstance(event, LensConfigure):
        _apply_lens_config(new, event)
        changed_users.append(event.user)
    else:
        raise ValueError(f"unhandled event {event!r}")

    new.seq = state.seq + 1
    delta: dict = {"base_seq": state.seq, "users": {}}
    for uid in changed_users:
        delta["users"][uid] = new.users[uid].to_json()
    for uid in removed_users:
        delta["users"][uid] = None
    if public_changed:
        delta["public"] = new.public_json()
    if warnings:
        delta["warnings"] = warnings
    return new, delta


def apply_delta(state_json: dict, delta: dict) -> dict:
    """Client-side delta application over the plain JSON state form."""
    if delta["base_seq"] != state_json["seq"]:
        raise StaleEvent(
            f"delta base {delta['base_seq']} does not match state seq {state_json['seq']}"
        )
    state_json = {
        "seq": delta["base_seq"] + 1,
        "users": dict(state_json["users"]),
        "public": delta.get("public", state_json["public"]),
    }
    for uid, body in delta["users"].items():
        if body is None:
            state_json["users"].pop(uid, None)
        else:
            state_json["users"][uid] = body
    return state_json


def visible_items(state: SessionState, viewer: str) -> list[dict]:
    """Everything the viewer can see: the public layer plus their own layer.

    Items are addressable units: view references and shared strokes are
    public; unshared strokes, nonempty selections, lenses, and technique
    toggles are personal. No other user's unshared item ever appears.
    """
    me = state.user(viewer)
    items: list[dict] = []
    for vis_id in sorted(state.config.specs):
        items.append({"kind": "view", "owner": "public", "id": vis_id})
    for stroke in state.public_strokes:
        items.append({"kind": "stroke", "owner": stroke.owner, "id": stroke.id,
                      "stroke": stroke})
    for stroke in me.strokes:
        items.append({"kind": "stroke", "owner": viewer, "id": stroke.id,
                      "stroke": stroke})
    for vis_id in sorted(me.selections):
        items.append({"kind": "selection", "owner": viewer, "id": f"{viewer}:sel:{vis_id}"})
    for vis_id in sorted(me.lenses):
        items.append({"kind": "lens", "owner": viewer, "id": f"{viewer}:lens:{vis_id}"})
    for vis_id in sorted(me.toggles):
        for key in sorted(me.toggles[vis_id]):
            items.append({"kind": "toggle", "owner": viewer,
                          "id": f"{viewer}:{vis_id}:{key}"})
    return items


def public_item_count(state: SessionState) -> int:
    return len(state.config.specs) + len(state.public_strokes)


def personal_item_count(state: SessionState, user_id: str) -> int:
    me = state.user(user_id)
    toggles = sum(len(t) for t in me.toggles.values())
    return len(me.strokes) + len(me.selections) + len(me.lenses) + toggles
