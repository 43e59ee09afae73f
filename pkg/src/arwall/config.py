"""Layout and dataset configuration loading.

A layout file is JSON: a display (preset name or explicit metrics), the
list of visualization specs, and optional augmentation parameter overrides.
Validation happens against the dataset at load time so a serving process
never starts on a broken configuration.
"""

from __future__ import annotations

import json
from pathlib import Path

from .data import DataTable, load_table
from .params import AugmentParams
from .session import SessionConfig
from .spatial import PRESETS, DisplayConfig
from .vis import VisSpec, build_marks, validate_spec


class ConfigError(ValueError):
    """Layout or dataset configuration is invalid; message names the field."""


def load_dataset(path: str | Path) -> DataTable:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"dataset: file not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        return load_table(fh, name=path.stem)


def parse_layout(data: dict, table: DataTable) -> SessionConfig:
    """Build a validated SessionConfig from parsed layout JSON."""
    display_cfg = data.get("display")
    if display_cfg is None:
        raise ConfigError("display: missing section")
    if isinstance(display_cfg, str):
        if display_cfg not in PRESETS:
            raise ConfigError(
                f"display: unknown preset {display_cfg!r}; have {sorted(PRESETS)}"
            )
        display = PRESETS[display_cfg]
    elif "preset" in display_cfg:
        name = display_cfg["preset"]
        if name not in PRESETS:
            raise ConfigError(f"display.preset: unknown preset {name!r}; have {sorted(PRESETS)}")
        display = PRESETS[name]
    else:
        try:
            display = DisplayConfig.from_json(display_cfg)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"display: {exc}") from exc

    views = data.get("views")
    if not views:
        raise ConfigError("views: layout declares no visualizations")
    specs: dict[str, VisSpec] = {}
    for i, body in enumerate(views):
        try:
            spec = VisSpec.from_json(body)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"views[{i}]: {exc}") from exc
        if spec.id in specs:
            raise ConfigError(f"views[{i}].id: duplicate vis id {spec.id!r}")
        bounds = display.pixel_rect
        r = spec.view_rect
        if not (
            bounds.x <= r.x and r.x2 <= bounds.x2 and bounds.y <= r.y and r.y2 <= bounds.y2
        ):
            raise ConfigError(
                f"views[{i}].rect: vis {spec.id!r} rect {r.to_json()} exceeds display "
                f"bounds {int(bounds.w)}x{int(bounds.h)}"
            )
        try:
            validate_spec(spec, table)
        except ValueError as exc:
            raise ConfigError(f"views[{i}]: {exc}") from exc
        specs[spec.id] = spec

    ids = sorted(specs)
    for a_idx, a in enumerate(ids):
        for b in ids[a_idx + 1:]:
            if specs[a].view_rect.overlaps(specs[b].view_rect):
                raise ConfigError(
                    f"views: view_rect of vis {a!r} overlaps view_rect of vis {b!r}"
                )

    try:
        params = AugmentParams.from_json(data.get("params"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params: {exc}") from exc

    marksets = {vid: build_marks(specs[vid], table) for vid in ids}
    return SessionConfig(
        display=display, specs=specs, table=table, marksets=marksets, params=params
    )


def load_layout(path: str | Path, table: DataTable) -> SessionConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"layout: file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"layout: invalid JSON in {path}: {exc}") from exc
    return parse_layout(data, table)


def load_session_config(dataset_path: str | Path, layout_path: str | Path) -> SessionConfig:
    table = load_dataset(dataset_path)
    return load_layout(layout_path, table)
