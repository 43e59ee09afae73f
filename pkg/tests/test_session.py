from __future__ import annotations

import random

import pytest

from arwall.canon import canonical_json, state_hash
from arwall.session import (
    InvalidStroke,
    Join,
    Leave,
    LensConfigure,
    LensMove,
    PenStroke,
    PoseEvent,
    ScrollLayers,
    Select,
    SessionState,
    ShareAnnotation,
    TechniqueToggle,
    UnknownUser,
    UnknownVis,
    apply_delta,
    apply_event,
    event_from_json,
    personal_item_count,
    public_item_count,
    visible_items,
)


@pytest.fixture()
def state(session_config):
    s = SessionState(config=session_config)
    s, _ = apply_event(s, Join("sue"))
    s, _ = apply_event(s, Join("matt"))
    return s


def test_seq_increments_by_one(state):
    before = state.seq
    after, _ = apply_event(state, Select("sue", vis="budget_gross", rows=(5,)))
    assert after.seq == before + 1
    assert state.seq == before  # input untouched


def test_pen_colors_by_join_order(state):
    assert state.users["sue"].pen_color == "#2ca02c"   # green
    assert state.users["matt"].pen_color == "#1f77b4"  # blue


def test_select_replace_then_toggle_empties(state):
    s, _ = apply_event(state, Select("sue", vis="budget_gross", rows=(5,), mode="replace"))
    s, _ = apply_event(s, Select("sue", vis="budget_gross", rows=(5,), mode="toggle"))
    assert "budget_gross" not in s.users["sue"].selections


def test_select_unknown_rows_rejected(state):
    with pytest.raises(ValueError):
        apply_event(state, Select("sue", vis="budget_gross", rows=(9999,)))


def test_unknown_user_and_vis(state):
    with pytest.raises(UnknownUser):
        apply_event(state, Select("ghost", vis="budget_gross", rows=(1,)))
    with pytest.raises(UnknownVis):
        apply_event(state, Select("sue", vis="nope", rows=(1,)))


def test_share_annotation_moves_to_public(state):
    s, _ = apply_event(
        state, PenStroke("matt", vis="budget_gross", points=((0.1, 0.1), (0.2, 0.2)))
    )
    stroke_id = s.users["matt"].strokes[0].id
    s, delta = apply_event(s, ShareAnnotation("matt", stroke_id=stroke_id))
    assert s.users["matt"].strokes == []
    assert len(s.public_strokes) == 1
    shared = s.public_strokes[0]
    assert shared.owner == "matt"
    assert shared.shared is True
    assert "public" in delta


def test_stroke_validation(state):
    with pytest.raises(InvalidStroke):
        apply_event(state, PenStroke("sue", vis="budget_gross", points=((0.5, 0.5),)))
    with pytest.raises(InvalidStroke):
        apply_event(
            state, PenStroke("sue", vis="budget_gross", points=((0.5, 0.5), (1.5, 0.5)))
        )


def test_visibility_isolation(state):
    s, _ = apply_event(
        state, PenStroke("sue", vis="budget_gross", points=((0.1, 0.1), (0.2, 0.2)))
    )
    sue_strokes = [i for i in visible_items(s, "sue") if i["kind"] == "stroke"]
    matt_strokes = [i for i in visible_items(s, "matt") if i["kind"] == "stroke"]
    assert len(sue_strokes) == 1
    assert len(matt_strokes) == 0

    stroke_id = s.users["sue"].strokes[0].id
    s, _ = apply_event(s, ShareAnnotation("sue", stroke_id=stroke_id))
    matt_strokes = [i for i in visible_items(s, "matt") if i["kind"] == "stroke"]
    assert len(matt_strokes) == 1
    assert matt_strokes[0]["owner"] == "sue"


def test_scroll_rotates_modulo(state):
    stack = [
        {"label": g, "filter": {"op": "eq", "column": "genre", "value": g}}
        for g in ("drama", "comedy", "action")
    ]
    s, _ = apply_event(
        state,
        TechniqueToggle("sue", vis="budget_gross", technique="layers",
                        params={"stack": stack}),
    )
    for _ in range(3):
        s, _ = apply_event(s, ScrollLayers("sue", vis="budget_gross", delta=1))
    assert s.users["sue"].layer_scroll["budget_gross"] == 0
    s, _ = apply_event(s, ScrollLayers("sue", vis="budget_gross", delta=1))
    assert s.users["sue"].layer_scroll["budget_gross"] == 1


def test_lens_move_creates_then_moves(state):
    s, _ = apply_event(state, LensMove("sue", vis="budget_gross", center=(0.3, 0.3)))
    assert s.users["sue"].lenses["budget_gross"].center == (0.3, 0.3)
    s, _ = apply_event(s, LensMove("sue", vis="budget_gross", center=(0.6, 0.6)))
    assert s.users["sue"].lenses["budget_gross"].center == (0.6, 0.6)
    s, _ = apply_event(
        s, LensConfigure("sue", vis="budget_gross", params={"mode": "deoverlap"})
    )
    assert s.users["sue"].lenses["budget_gross"].mode == "deoverlap"
    assert len(s.users["sue"].lenses) == 1  # at most one lens per vis per user


def test_embedded_toggle_is_per_mark(state):
    mark = "movies_by_year:bar:2007"
    ev = TechniqueToggle("sue", vis="movies_by_year", technique="embedded",
                         params={"mark": mark, "dimension": "genre"})
    s, _ = apply_event(state, ev)
    assert s.users["sue"].toggles["movies_by_year"]["embedded"]["marks"] == [mark]
    s, _ = apply_event(s, ev)
    assert "movies_by_year" not in s.users["sue"].toggles


def _random_events(config, rng: random.Random, n: int, users):
    vises = sorted(config.specs)
    events = []
    for u in users:
        events.append(Join(u))
    stroke_ids = {u: [] for u in users}
    stroke_seq = {u: 0 for u in users}
    for _ in range(n):
        u = rng.choice(users)
        kind = rng.randrange(8)
        if kind == 0:
            events.append(PoseEvent(u, position=(rng.uniform(-1, 3), rng.uniform(0, 2),
                                                 rng.uniform(0.3, 5.0))))
        elif kind == 1:
            vis = rng.choice(vises)
            rows = tuple(rng.sample(range(config.table.row_count), rng.randint(0, 5)))
            events.append(Select(u, vis=vis, rows=rows,
                                 mode=rng.choice(("replace", "toggle"))))
        elif kind == 2:
            vis = rng.choice(vises)
            events.append(PenStroke(u, vis=vis, points=(
                (rng.random(), rng.random()), (rng.random(), rng.random()))))
            stroke_ids[u].append(f"{u}:s{stroke_seq[u]}")
            stroke_seq[u] += 1
        elif kind == 3 and stroke_ids[u]:
            sid = rng.choice(stroke_ids[u])
            stroke_ids[u].remove(sid)
            events.append(ShareAnnotation(u, stroke_id=sid))
        elif kind == 4:
            events.append(TechniqueToggle(u, vis=rng.choice(vises), technique="hinged"))
        elif kind == 5:
            events.append(TechniqueToggle(u, vis="*", technique="curved"))
        elif kind == 6:
            events.append(LensMove(u, vis=rng.choice(vises),
                                   center=(rng.random(), rng.random())))
        else:
            events.append(ScrollLayers(u, vis=rng.choice(vises), delta=1))
    return events


def test_replay_determinism_500_events(session_config):
    rng = random.Random(99)
    events = _random_events(session_config, rng, 500, ["a", "b", "c"])

    first = SessionState(config=session_config)
    for ev in events:
        first, _ = apply_event(first, ev)
    second = SessionState(config=session_config)
    for ev in events:
        second, _ = apply_event(second, ev)
    assert canonical_json(first.to_json()) == canonical_json(second.to_json())
    assert state_hash(first.to_json()) == state_hash(second.to_json())


def test_delta_stream_reconstructs_state(session_config):
    rng = random.Random(41)
    events = _random_events(session_config, rng, 200, ["a", "b"])
    state = SessionState(config=session_config)
    mirror = state.to_json()
    for ev in events:
        state, delta = apply_event(state, ev)
        mirror = apply_delta(mirror, delta)
    assert canonical_json(mirror) == canonical_json(state.to_json())


def test_visible_item_counts_no_double_counting(session_config):
    rng = random.Random(123)
    events = _random_events(session_config, rng, 300, ["a", "b", "c"])
    state = SessionState(config=session_config)
    for ev in events:
        state, _ = apply_event(state, ev)
    for u in state.users:
        items = visible_items(state, u)
        assert len(items) == public_item_count(state) + personal_item_count(state, u)
        ids = [i["id"] for i in items]
        assert len(ids) == len(set(ids))
        for item in items:
            if item["owner"] not in ("public", u) and item["kind"] == "stroke":
                assert item["stroke"].shared


def test_selection_immune_to_unrelated_events(session_config):
    state = SessionState(config=session_config)
    state, _ = apply_event(state, Join("a"))
    state, _ = apply_event(state, Join("b"))
    state, _ = apply_event(state, Select("a", vis="budget_gross", rows=(42, 87)))
    before = set(state.users["a"].selections["budget_gross"])
    state, _ = apply_event(state, PenStroke("b", vis="votes_by_year",
                                            points=((0.1, 0.1), (0.9, 0.9))))
    state, _ = apply_event(state, PoseEvent("b", position=(1.0, 1.0, 1.0)))
    state, _ = apply_event(state, TechniqueToggle("b", vis="*", technique="curved"))
    assert set(state.users["a"].selections["budget_gross"]) == before


def test_leave_removes_user_keeps_public(state):
    s, _ = apply_event(state, PenStroke("sue", vis="budget_gross",
                                        points=((0.1, 0.1), (0.2, 0.2))))
    s, _ = apply_event(s, ShareAnnotation("sue", stroke_id=s.users["sue"].strokes[0].id))
    s, delta = apply_event(s, Leave("sue"))
    assert "sue" not in s.users
    assert delta["users"]["sue"] is None
    assert len(s.public_strokes) == 1


def test_event_json_round_trip(state):
    events = [
        Join("sue"),
        PoseEvent("sue", position=(1.0, 2.0, 3.0), facing=(0.0, 0.0, -1.0)),
        Select("sue", vis="budget_gross", rows=(1, 2), mode="toggle"),
        TechniqueToggle("sue", vis="*", technique="curved", params={}),
        PenStroke("sue", vis="budget_gross", points=((0.1, 0.2), (0.3, 0.4))),
        ShareAnnotation("sue", stroke_id="sue:s0"),
        ScrollLayers("sue", vis="budget_gross", delta=-1),
        LensMove("sue", vis="budget_gross", center=(0.5, 0.5)),
        LensConfigure("sue", vis="budget_gross", params={"mode": "remap"}),
        Leave("sue"),
    ]
    for ev in events:
        again = event_from_json(ev.to_json())
        assert again == ev
