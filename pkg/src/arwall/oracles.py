"""Independent brute-force oracles for scenario assertions.

These deliberately re-derive expected values with the dumbest possible
loops (linear scans, no shared helpers from the data/vis modules), so a
scenario assertion cross-checks the engine against an implementation that
cannot share its bugs.
"""

from __future__ import annotations


def brute_histogram(values: list[float], bins: int) -> tuple[list[float], list[int]]:
    """Equal-width binning by linear scan; last bin closed."""
    if not values:
        return [i / bins for i in range(bins + 1)], [0] * bins
    lo = min(values)
    hi = max(values)
    if lo == hi:
        hi = lo + 1.0
    edges = [lo + (hi - lo) * i / bins for i in range(bins + 1)]
    counts = [0] * bins
    for v in values:
        for b in range(bins):
            if (edges[b] <= v < edges[b + 1]) or (b == bins - 1 and v == edges[bins]):
                counts[b] += 1
                break
    return edges, counts


def brute_group_count(values: list) -> list[tuple[str, int]]:
    """Tally of non-missing values, sorted by text."""
    tally: dict[str, int] = {}
    for v in values:
        if v is None or v == "":
            continue
        key = str(v)
        tally[key] = tally.get(key, 0) + 1
    return sorted(tally.items())


def brute_link_join(
    selected_rows: set,
    src_marks: list[tuple[str, set]],
    dst_marks_by_vis: dict,
) -> set:
    """Row-id join: every (source mark, target mark) pair sharing a selected
    row, over all target views."""
    pairs = set()
    for src_id, src_rows in src_marks:
        mine = src_rows & selected_rows
        if not mine:
            continue
        for dst_vis, dst_marks in dst_marks_by_vis.items():
            for dst_id, dst_rows in dst_marks:
                if mine & dst_rows:
                    pairs.add((src_id, dst_id))
    return pairs


def brute_hinge_angle(d: float, near: float, far: float) -> float:
    t = (d - near) / (far - near)
    t = 0.0 if t < 0.0 else 1.0 if t > 1.0 else t
    return 90.0 * t
