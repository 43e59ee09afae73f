from __future__ import annotations

import random

import pytest

from arwall.data import (
    EmptyInput,
    NonCategoricalKey,
    NonNumericDimension,
    RaggedRow,
    RowFilter,
    aggregate,
    filtered_row_ids,
    group_count,
    infer_dimension,
    load_table,
    write_csv,
)


def test_load_table_basic():
    table = load_table("a,b\n1,x\n2,y\n", name="t")
    assert table.row_count == 2
    assert table.column("a").kind == "numeric"
    assert table.column("b").kind == "categorical"
    assert table.column("a").values == (1.0, 2.0)
    assert table.column("b").values == ("x", "y")


def test_load_table_header_only():
    table = load_table("a,b\n", name="t")
    assert table.row_count == 0
    assert [c.name for c in table.columns] == ["a", "b"]


def test_load_table_fixture(movies, movie_rows):
    # independent line/field count of the fixture file
    assert movies.row_count == len(movie_rows) == 200
    assert movies.column("year").kind == "numeric"
    assert movies.column("genre").kind == "categorical"
    assert movies.column("title").kind == "categorical"
    assert movies.column("avg_vote").kind == "numeric"


def test_load_table_ragged_row():
    with pytest.raises(RaggedRow):
        load_table("a,b\n1\n", name="t")


def test_load_table_empty_input():
    with pytest.raises(EmptyInput):
        load_table("", name="t")


def test_load_table_quoted_fields():
    table = load_table('a,b\n"x, y",2\n', name="t")
    assert table.column("a").values == ("x, y",)


def test_missing_values_excluded_from_kind_inference():
    table = load_table("a,b\n,x\n3,y\n", name="t")
    assert table.column("a").kind == "numeric"
    assert table.column("a").values == (None, 3.0)


@pytest.mark.parametrize(
    "values,expected",
    [
        (["1", "2.5", "-3"], "numeric"),
        (["2007-01-01", "2019-12-31"], "temporal"),
        (["1", "abc"], "categorical"),
        ([], "categorical"),
        (["", ""], "categorical"),
        (["1e3", "4"], "numeric"),
        (["nan", "1"], "categorical"),
        (["2007-13-01"], "categorical"),
    ],
)
def test_infer_dimension(values, expected):
    assert infer_dimension(values) == expected


def test_aggregate_two_bins():
    table = load_table("v\n1\n2\n3\n4\n", name="t")
    hist = aggregate(table, "v", bins=2)
    assert list(hist.bin_edges) == [1.0, 2.5, 4.0]
    assert list(hist.counts) == [2, 2]


def test_aggregate_singleton_degenerate_range():
    table = load_table("v\n5\n", name="t")
    hist = aggregate(table, "v", bins=1)
    assert list(hist.bin_edges) == [5.0, 6.0]
    assert list(hist.counts) == [1]


def test_aggregate_last_bin_closed():
    table = load_table("v\n0\n10\n", name="t")
    hist = aggregate(table, "v", bins=5)
    assert hist.counts[-1] == 1  # max value lands in the closed last bin


def test_aggregate_fixture_duration_brute_force(movies, movie_rows):
    hist = aggregate(movies, "duration", bins=10)
    durations = [float(r["duration"]) for r in movie_rows]
    lo, hi = min(durations), max(durations)
    edges = [lo + (hi - lo) * i / 10 for i in range(11)]
    counts = [0] * 10
    for v in durations:
        for b in range(10):  # linear scan, last bin closed
            if (edges[b] <= v < edges[b + 1]) or (b == 9 and v == edges[10]):
                counts[b] += 1
                break
    assert list(hist.counts) == counts
    assert sum(hist.counts) == 200


def test_aggregate_non_numeric_dimension(movies):
    with pytest.raises(NonNumericDimension):
        aggregate(movies, "genre", bins=4)


def test_aggregate_no_rows_after_filter(movies):
    nothing = RowFilter(op="eq", column="genre", value="nope")
    hist = aggregate(movies, "duration", bins=4, where=nothing)
    assert hist.empty
    assert list(hist.bin_edges) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert list(hist.counts) == [0, 0, 0, 0]


def test_group_count_fixture_2007(movies, movie_rows):
    where = RowFilter(op="eq", column="year", value=2007)
    got = group_count(movies, "genre", where=where)
    tally = {}
    for r in movie_rows:
        if float(r["year"]) == 2007:
            tally[r["genre"]] = tally.get(r["genre"], 0) + 1
    assert got == sorted(tally.items())
    assert sum(c for _, c in got) == sum(tally.values())


def test_group_count_no_rows(movies):
    where = RowFilter(op="eq", column="year", value=1800)
    assert group_count(movies, "genre", where=where) == []


def test_group_count_non_categorical(movies):
    with pytest.raises(NonCategoricalKey):
        group_count(movies, "year")


def _random_table(rng: random.Random):
    n_rows = rng.randint(0, 60)
    cols = ["num", "cat", "sparse"]
    lines = [",".join(cols)]
    for _ in range(n_rows):
        num = f"{rng.uniform(-50, 50):.4f}"
        cat = rng.choice(["a", "b", "c", 'd "quoted"', "e,comma"])
        sparse = "" if rng.random() < 0.3 else f"{rng.randint(0, 9)}"
        if "," in cat or '"' in cat:
            cat = '"' + cat.replace('"', '""') + '"'
        lines.append(f"{num},{cat},{sparse}")
    return load_table("\n".join(lines) + "\n", name="rand")


def test_histogram_counts_match_filtered_rows_property():
    rng = random.Random(7)
    for _ in range(40):
        table = _random_table(rng)
        where = RowFilter(op="gt", column="num", value=0.0)
        hist = aggregate(table, "num", bins=rng.randint(1, 8), where=where)
        present = [
            r for r in filtered_row_ids(table, where)
            if table.value("num", r) is not None
        ]
        assert sum(hist.counts) == len(present)


def test_group_count_partition_property():
    rng = random.Random(11)
    for _ in range(40):
        table = _random_table(rng)
        counts = group_count(table, "cat")
        missing = sum(1 for r in table.row_ids() if table.value("cat", r) is None)
        assert sum(c for _, c in counts) == table.row_count - missing


def test_csv_round_trip_property():
    rng = random.Random(13)
    for _ in range(25):
        table = _random_table(rng)
        again = load_table(write_csv(table), name="rand")
        assert again.row_count == table.row_count
        for col in table.columns:
            assert again.column(col.name).values == col.values
            assert again.column(col.name).kind == col.kind


def test_row_filter_json_round_trip():
    f = RowFilter(
        op="and",
        children=(
            RowFilter(op="eq", column="genre", value="drama"),
            RowFilter(op="ge", column="year", value=2000),
        ),
    )
    assert RowFilter.from_json(f.to_json()) == f
