"""Pure type-inference functions without I/O or side effects.

Used by the artifact validator to re-infer column types from data rows and
cross-check them against the types declared in the [FIELDS] section.
"""
from __future__ import annotations

import re

# --- Constants ---

INT_RE = re.compile(r"^-?\d+$")
# Optional decimal: matches "5" and "5.0" so mixed int/float columns resolve to 'number'.
FLOAT_RE = re.compile(r"^-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?$")
_FLOAT = r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?"
VECTOR_RE = re.compile(rf"^{_FLOAT}(?: {_FLOAT})*$")
BOOLEAN_VALUES: frozenset[str] = frozenset({"true", "false"})

# Artifacts write absent values (no obstacle in view, no gait on a fall) as empty cells.
MISSING: frozenset[str] = frozenset({""})

DECLARABLE_TYPES: frozenset[str] = frozenset({"integer", "number", "boolean", "vector", "string"})

# Type subtype lattice: inferred → set of declared types it is valid under.
# integer ⊂ number ⊂ vector ⊂ string; boolean ⊂ string.
_SUBTYPES: dict[str, frozenset[str]] = {
    "integer": frozenset({"integer", "number", "vector", "string"}),
    "number":  frozenset({"number", "vector", "string"}),
    "vector":  frozenset({"vector", "string"}),
    "boolean": frozenset({"boolean", "string"}),
    "string":  frozenset({"string"}),
}


# --- Type checkers ---

def _is_integer(s: str) -> bool:
    return bool(INT_RE.match(s))


def _is_number(s: str) -> bool:
    return bool(INT_RE.match(s) or FLOAT_RE.match(s))


def _is_vector(s: str) -> bool:
    return bool(VECTOR_RE.match(s))


# --- Public API ---

def infer_type(values: list[str], missing: frozenset[str] = MISSING) -> str:
    """
    Infer an artifact column type from its string values.
    Cascade: integer → number → boolean → vector → string.
    An all-missing or empty column returns 'string'.
    """
    pruned = [v.strip() for v in values if v.strip() not in missing]
    if not pruned:
        return "string"
    if all(_is_integer(v) for v in pruned):
        return "integer"
    if all(_is_number(v) for v in pruned):
        return "number"
    if all(v in BOOLEAN_VALUES for v in pruned):
        return "boolean"
    if all(_is_vector(v) for v in pruned):
        return "vector"
    return "string"


def is_subtype_or_equal(inferred: str, declared: str) -> bool:
    """
    True when data of the inferred type satisfies the declared type:
      - inferred=integer, declared=number → True
      - inferred=vector,  declared=number → False
    """
    return declared in _SUBTYPES.get(inferred, frozenset())
