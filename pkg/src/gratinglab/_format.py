"""Deterministic text output helpers."""

import json


def fmt(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


def dump_json(obj) -> str:
    # json renders floats with repr(), which is the shortest round-trip form
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
