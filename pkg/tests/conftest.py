from __future__ import annotations

import json
from pathlib import Path

import pytest

from arwall.config import load_layout, load_session_config, load_dataset

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_CSV = REPO_ROOT / "fixtures" / "movies_200.csv"
WALKTHROUGH_LAYOUT = REPO_ROOT / "layouts" / "movies_walkthrough.json"
WALKTHROUGH_SCENARIO = REPO_ROOT / "scenarios" / "movies_walkthrough.json"


@pytest.fixture(scope="session")
def movies():
    return load_dataset(FIXTURE_CSV)


@pytest.fixture(scope="session")
def movie_rows():
    """The fixture file parsed independently of the package loader."""
    import csv

    with FIXTURE_CSV.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [dict(zip(header, row)) for row in reader]
    return rows


@pytest.fixture(scope="session")
def session_config(movies):
    return load_layout(WALKTHROUGH_LAYOUT, movies)


def load_json(path: Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
