"""Frictionless Table Schemas for stepnav artifacts.

Column types come from the artifact's own [FIELDS] declaration; value ranges
and enumerations come from the artifact kind. Only standard Frictionless keys
are emitted.
"""
from __future__ import annotations

import math
from typing import Any

from ._infer import MISSING, VECTOR_RE

KINDS: frozenset[str] = frozenset({"environment", "trace", "curves", "metrics", "demos"})

# Frictionless has no vector type: vectors validate as strings with a pattern.
_FRICTIONLESS_TYPES = {
    "integer": "integer",
    "number": "number",
    "boolean": "boolean",
    "vector": "string",
    "string": "string",
}

_UNIT = {"minimum": 0, "maximum": 1}
_OUTCOMES = ["running", "goal", "collision", "fall", "timeout"]

# kind → column → extra constraints
KIND_CONSTRAINTS: dict[str, dict[str, dict[str, Any]]] = {
    "environment": {
        "kind": {"required": True, "enum": ["circle", "ellipse", "polygon"]},
        "params": {"required": True},
    },
    "trace": {
        "step": {"required": True, "minimum": 1},
        "stance_index": {"required": True, "enum": [-1, 1]},
        "d_c": {"minimum": 0, "maximum": 3},
        "phi_c": {"minimum": -math.pi / 4, "maximum": math.pi / 4},
        "r_goal": _UNIT,
        "r_heading": _UNIT,
        "r_action": _UNIT,
        "r_velocity": _UNIT,
        "r_obstacle": _UNIT,
        "r_terminal": {"minimum": -80, "maximum": 100},
        "d_g": {"required": True, "minimum": 0},
        "outcome": {"required": True, "enum": _OUTCOMES},
    },
    "curves": {
        "episode": {"required": True, "minimum": 0},
        "steps": {"required": True, "minimum": 1},
        "demo_fraction": {"required": True, **_UNIT},
        "alpha": {"required": True, "minimum": 0},
        "outcome": {"required": True, "enum": _OUTCOMES[1:]},
    },
    "metrics": {
        "method": {"required": True},
        "success_rate": {"required": True, "minimum": 0, "maximum": 100},
        "success_std": {"required": True, "minimum": 0},
        "trials": {"required": True, "minimum": 1},
    },
    "demos": {
        "grid": {"required": True, "pattern": "[0-9a-f]{1024}"},
        "next_grid": {"required": True, "pattern": "[0-9a-f]{1024}"},
        "stance_index": {"required": True, "enum": [-1, 1]},
        "d_c": {"required": True, "minimum": 0, "maximum": 3},
        "phi_c": {"required": True, "minimum": -math.pi / 4, "maximum": math.pi / 4},
    },
}


def frictionless_type(declared: str) -> str:
    return _FRICTIONLESS_TYPES.get(declared, "string")


def build_frictionless_schema(
    fields: list[str],
    types: list[str],
    kind: str,
    missing: frozenset[str] = MISSING,
) -> dict[str, Any]:
    """Build a Frictionless Table Schema dict for one artifact."""
    extra = KIND_CONSTRAINTS.get(kind, {})
    out = []
    for name, declared in zip(fields, types):
        field: dict[str, Any] = {"name": name, "type": frictionless_type(declared)}
        constraints: dict[str, Any] = dict(extra.get(name, {}))
        if declared == "vector":
            constraints.setdefault("pattern", VECTOR_RE.pattern.lstrip("^").rstrip("$"))
        if declared == "boolean":
            field["trueValues"] = ["true"]
            field["falseValues"] = ["false"]
        if constraints:
            field["constraints"] = constraints
        out.append(field)
    return {"fields": out, "missingValues": sorted(missing)}
