from __future__ import annotations

import math
import random

import pytest

from arwall.canon import canonical_json
from arwall.data import load_table
from arwall.geometry import Rect
from arwall.vis import (
    InvalidBinding,
    NonNumericAxis,
    OutsideView,
    VisSpec,
    axis_column,
    build_marks,
    hit_test,
    linked_marks,
    mark_anchor,
    validate_spec,
)

RECT = Rect(0, 0, 400, 300)


def _table(csv_text):
    return load_table(csv_text, name="t")


def test_bar_heights_ratio_two_to_one():
    table = _table("k\na\na\nb\n")
    spec = VisSpec("v", "bar", {"x": "k"}, RECT)
    ms = build_marks(spec, table)
    assert len(ms.marks) == 2
    by_id = {m.id: m for m in ms.marks}
    tall = by_id["v:bar:a"].geometry["h"]
    short = by_id["v:bar:b"].geometry["h"]
    assert tall == 1.0
    assert math.isclose(tall / short, 2.0)
    assert by_id["v:bar:a"].row_ids == frozenset({0, 1})


def test_pie_symmetric_sectors():
    table = _table("k\na\nb\n")
    spec = VisSpec("v", "pie", {"color": "k"}, RECT)
    ms = build_marks(spec, table)
    assert len(ms.marks) == 2
    assert all(math.isclose(m.geometry["span_deg"], 180.0) for m in ms.marks)


def test_pie_spans_sum_to_360(movies):
    spec = VisSpec("v", "pie", {"color": "genre"}, RECT)
    ms = build_marks(spec, movies)
    assert abs(sum(m.geometry["span_deg"] for m in ms.marks) - 360.0) < 1e-9


def test_scatter_fixture_brute_force(movies, movie_rows):
    spec = VisSpec("v", "scatter", {"x": "budget", "y": "gross"}, RECT)
    ms = build_marks(spec, movies)
    assert len(ms.marks) == 200
    budgets = [float(r["budget"]) for r in movie_rows]
    lo, hi = min(budgets), max(budgets)
    for m in ms.marks:
        row = min(m.row_ids)
        expected = (budgets[row] - lo) / (hi - lo)
        assert math.isclose(m.geometry["x"], expected, abs_tol=1e-12)


def test_marks_geometry_in_unit_square(movies):
    for kind, bindings in (
        ("scatter", {"x": "year", "y": "duration"}),
        ("line", {"x": "year", "y": "avg_vote", "color": "genre"}),
        ("parallel_coordinates", {"axes": ["year", "duration", "budget"]}),
        ("bar", {"x": "genre"}),
    ):
        ms = build_marks(VisSpec("v", kind, bindings, RECT), movies)
        for m in ms.marks:
            g = m.geometry
            if m.shape == "point":
                assert 0 <= g["x"] <= 1 and 0 <= g["y"] <= 1
            elif m.shape == "rect":
                assert 0 <= g["x"] and g["x"] + g["w"] <= 1 + 1e-12
                assert 0 <= g["y"] and g["y"] + g["h"] <= 1 + 1e-12
            elif m.shape == "polyline":
                for x, y in g["points"]:
                    assert -1e-12 <= x <= 1 + 1e-12 and -1e-12 <= y <= 1 + 1e-12


def test_row_coverage_per_vis(movies):
    # union of marks' rows covers exactly the displayed rows
    ms = build_marks(VisSpec("v", "bar", {"x": "genre"}, RECT), movies)
    covered = set()
    for m in ms.marks:
        covered |= m.row_ids
    assert covered == set(range(200))


def test_line_single_series_without_color():
    table = _table("x,y\n1,5\n2,6\n3,4\n")
    ms = build_marks(VisSpec("v", "line", {"x": "x", "y": "y"}, RECT), table)
    assert len(ms.marks) == 1
    assert ms.marks[0].row_ids == frozenset({0, 1, 2})
    xs = [p[0] for p in ms.marks[0].geometry["points"]]
    assert xs == sorted(xs)


def test_empty_table_yields_empty_markset():
    table = _table("x,y\n")
    ms = build_marks(VisSpec("v", "scatter", {"x": "x", "y": "y"}, RECT), table)
    assert ms.marks == ()


def test_invalid_binding_missing_column():
    table = _table("x\n1\n")
    with pytest.raises(InvalidBinding):
        validate_spec(VisSpec("v", "scatter", {"x": "x", "y": "nope"}, RECT), table)


def test_invalid_binding_wrong_kind():
    table = _table("x,g\n1,a\n")
    with pytest.raises(InvalidBinding):
        validate_spec(VisSpec("v", "scatter", {"x": "x", "y": "g"}, RECT), table)


def test_build_marks_deterministic_bytes(movies):
    spec = VisSpec("v", "scatter", {"x": "budget", "y": "gross", "color": "genre"}, RECT)
    a = canonical_json(build_marks(spec, movies).to_json())
    b = canonical_json(build_marks(spec, movies).to_json())
    assert a == b


def test_linked_marks_intersecting():
    table = _table("k\na\na\nb\n")
    ms = build_marks(VisSpec("v", "bar", {"x": "k"}, RECT), table)
    assert linked_marks({0}, ms) == {"v:bar:a"}
    assert linked_marks(set(), ms) == set()


def test_linked_marks_brute_force_property(movies):
    specs = [
        VisSpec("s1", "scatter", {"x": "budget", "y": "gross"}, RECT),
        VisSpec("s2", "bar", {"x": "genre"}, RECT),
        VisSpec("s3", "parallel_coordinates", {"axes": ["year", "duration"]}, RECT),
    ]
    marksets = [build_marks(s, movies) for s in specs]
    rng = random.Random(17)
    for _ in range(100):
        selection = set(rng.sample(range(200), rng.randint(0, 12)))
        for ms in marksets:
            expected = {m.id for m in ms.marks if m.row_ids & selection}
            assert linked_marks(selection, ms) == expected


def test_hit_test_bar_center():
    table = _table("k\na\n")
    spec = VisSpec("v", "bar", {"x": "k"}, RECT)
    ms = build_marks(spec, table)
    assert hit_test(spec, ms, (200.0, 100.0)) == "v:bar:a"


def test_hit_test_empty_region():
    table = _table("x,y\n0,0\n10,10\n")
    spec = VisSpec("v", "scatter", {"x": "x", "y": "y"}, RECT)
    ms = build_marks(spec, table)
    assert hit_test(spec, ms, (200.0, 30.0)) is None


def test_hit_test_outside_view():
    table = _table("x,y\n0,0\n")
    spec = VisSpec("v", "scatter", {"x": "x", "y": "y"}, RECT)
    ms = build_marks(spec, table)
    with pytest.raises(OutsideView):
        hit_test(spec, ms, (500.0, 30.0))


def test_hit_test_tie_prefers_higher_index():
    # two rows at identical coordinates produce coincident discs
    table = _table("x,y\n1,1\n1,1\n3,3\n")
    spec = VisSpec("v", "scatter", {"x": "x", "y": "y"}, RECT)
    ms = build_marks(spec, table)
    p = (spec.view_rect.x + 0.0 * 400, spec.view_rect.y + 0.0 * 300)
    assert hit_test(spec, ms, (0.0, 0.0)) == "v:pt:1"


def test_legend_only_for_color_binding(movies):
    plain = build_marks(VisSpec("v", "scatter", {"x": "year", "y": "duration"}, RECT), movies)
    assert plain.legend == ()
    colored = build_marks(
        VisSpec("v", "scatter", {"x": "year", "y": "duration", "color": "genre"}, RECT),
        movies,
    )
    assert len(colored.legend) == 7


def test_axis_column_resolution():
    spec = VisSpec("v", "scatter", {"x": "year", "y": "duration"}, RECT)
    assert axis_column(spec, "bottom") == "year"
    assert axis_column(spec, "left") == "duration"
    bar = VisSpec("v", "bar", {"x": "genre"}, RECT)
    with pytest.raises(NonNumericAxis):
        axis_column(bar, "left")


def test_mark_anchor_shapes():
    table = _table("k\na\n")
    bar = build_marks(VisSpec("v", "bar", {"x": "k"}, RECT), table).marks[0]
    ax, ay = mark_anchor(bar)
    assert 0 <= ax <= 1 and 0 <= ay <= 1


def test_row_subset_keeps_original_ids(movies):
    spec = VisSpec("v", "scatter", {"x": "budget", "y": "gross"}, RECT)
    subset = {5, 10, 42}
    ms = build_marks(spec, movies, row_subset=subset)
    assert {min(m.row_ids) for m in ms.marks} == subset
