"""Canonical JSON serialization and hashing.

Every piece of state that crosses the wire, lands in a golden file, or gets
hashed for convergence checks goes through :func:`canonical_json`: keys
sorted, no whitespace, floats rendered with 9 significant digits, ints kept
as ints. Two structurally equal values always produce identical bytes, on
any platform.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any


def format_float(x: float) -> str:
    """Render a float with 9 significant digits as a valid JSON number."""
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite float not serializable: {x!r}")
    if x == 0.0:
        return "0"
    text = format(x, ".9g")
    # ".9g" may emit "1e+05"; strip the plus and leading exponent zeros
    if "e" in text:
        mantissa, exp = text.split("e")
        text = f"{mantissa}e{int(exp)}"
    return text


def _write(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _write(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"non-string dict key: {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _write(obj[key], out)
        out.append("}")
    else:
        raise TypeError(f"not canonically serializable: {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    """Serialize nested dicts/lists/scalars to a canonical JSON string."""
    out: list[str] = []
    _write(obj, out)
    return "".join(out)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_json(obj).encode("utf-8")


def state_hash(obj: Any) -> str:
    """SHA-256 hex digest of the canonical serialization."""
    return hashlib.sha256(canonical_bytes(obj)).hexdigest()


def first_divergence(a: Any, b: Any, path: str = "") -> str | None:
    """Return the path of the first difference between two JSON-like values.

    Returns None when the values are canonically equal. Paths look like
    ``users.sue.selections.budget_gross`` with list indices inline.
    """
    if type(a) is not type(b) and not (isinstance(a, (int, float)) and isinstance(b, (int, float))):
        return path or "<root>"
    if isinstance(a, dict):
        for key in sorted(set(a) | set(b)):
            sub = f"{path}.{key}" if path else str(key)
            if key not in a or key not in b:
                return sub
            hit = first_divergence(a[key], b[key], sub)
            if hit:
                return hit
        return None
    if isinstance(a, list):
        if len(a) != len(b):
            return f"{path}.length" if path else "length"
        for i, (x, y) in enumerate(zip(a, b)):
            hit = first_divergence(x, y, f"{path}[{i}]" if path else f"[{i}]")
            if hit:
                return hit
        return None
    if isinstance(a, float) or isinstance(b, float):
        if format_float(float(a)) != format_float(float(b)):
            return path or "<root>"
        return None
    if a != b:
        return path or "<root>"
    return None
