"""Canonical text helpers shared by the codecs: stable number formatting,
compact key-sorted JSON, and content hashing."""

from __future__ import annotations

import hashlib
import json
import math


def format_number(value: float) -> str:
    """Render a finite number without a trailing fractional part.

    Integer-valued floats print as integers ("500", not "500.0"); everything
    else uses the shortest round-trip representation.
    """
    if not math.isfinite(value):
        raise ValueError(f"non-finite number: {value!r}")
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def canonical_json(obj: object) -> str:
    """Key-sorted, separator-compact JSON; byte-identical for equal values."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()
