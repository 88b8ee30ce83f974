"""Artifact inspection.

Public API: validate_artifact(path, outdir=None)

Three-stage check:
  1. Metadata completeness (kind, field_delimiter and provenance keys).
  2. Type consistency: re-infer column types from data and compare to declared
     types (declared type is authoritative; inferred wider than declared → [WARN]).
  3. Frictionless data validation against a schema built from the declared
     types plus the kind's value constraints.
"""
from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path
from typing import Optional, Union

from loguru import logger

from ._infer import DECLARABLE_TYPES, MISSING, infer_type, is_subtype_or_equal
from ._parser import ArtifactHeader, parse_header
from ._records import iter_data_rows
from ._report import write_report
from ._schema import KINDS, build_frictionless_schema
from .exceptions import ValidationError

# How many data rows (excluding header) to sample for type re-inference.
_INFER_SAMPLE = 500

PROVENANCE_KEYS = ("config_hash", "seed", "code_version")


def _check_metadata(header: ArtifactHeader) -> list[str]:
    """Return a list of issue strings (empty = clean)."""
    issues = []
    if "field_delimiter" not in header.metadata:
        issues.append("[FAIL] Missing required metadata key: field_delimiter")
    if header.kind not in KINDS:
        issues.append(f"[FAIL] Unknown artifact kind {header.kind!r}; expected one of {sorted(KINDS)}")
    if not header.fields:
        issues.append("[FAIL] [FIELDS] section declares no fields")
    elif len(header.types) != len(header.fields):
        issues.append(
            f"[FAIL] {len(header.fields)} fields declared but {len(header.types)} types"
        )
    unknown = sorted(set(header.types) - DECLARABLE_TYPES)
    if unknown:
        issues.append(f"[FAIL] Undeclarable column types: {unknown}")
    for key in PROVENANCE_KEYS:
        if key not in header.metadata:
            issues.append(f"[WARN] Provenance key '{key}' is missing")
    return issues


def _extract_data(path: Path, tmp_csv: Path, field_delimiter: str) -> list[list[str]]:
    """
    Copy the [DATA] section to a comma-delimited temp CSV and return the first
    _INFER_SAMPLE data rows for type re-inference.
    """
    sampled: list[list[str]] = []
    with open(tmp_csv, "w", encoding="utf-8", newline="") as tgt:
        writer = csv.writer(tgt)
        for n, row in enumerate(iter_data_rows(path, field_delimiter)):
            writer.writerow(row)
            if n > 0 and len(sampled) < _INFER_SAMPLE:
                sampled.append(row)
    return sampled


def _cross_check_types(
    declared_types: list[str],
    data_rows: list[list[str]],
    field_names: list[str],
    missing: frozenset[str] = MISSING,
) -> list[tuple[str, str, str, bool]]:
    """
    Re-infer column types from data_rows and compare to declared types.
    Columns with no non-missing values are skipped.
    """
    if not declared_types or not data_rows:
        return []

    n = len(declared_types)
    col_values: list[list[str]] = [[] for _ in range(n)]
    for row in data_rows:
        for i in range(min(len(row), n)):
            col_values[i].append(row[i])

    results = []
    for i, declared in enumerate(declared_types):
        if all(v.strip() in missing for v in col_values[i]):
            continue
        name = field_names[i] if i < len(field_names) else str(i)
        inferred = infer_type(col_values[i], missing)
        results.append((name, declared, inferred, is_subtype_or_equal(inferred, declared)))
    return results


def _import_frictionless():
    """Lazy import; frictionless stays off the import path of the simulation modules."""
    try:
        from frictionless import Resource, Schema
        return Resource, Schema
    except ImportError as exc:
        raise ValidationError(
            "The 'frictionless' package is required. Install it: pip install frictionless"
        ) from exc


def validate_artifact(
    path: Union[str, Path],
    outdir: Optional[Union[str, Path]] = None,
) -> tuple[str, bool]:
    """
    Inspect one artifact and write `<stem>_report.txt` to outdir (default: the
    artifact's directory). Returns (report_path, valid).
    valid=True only when metadata is clean AND Frictionless reports no data errors.
    Raises ParseError if the header cannot be parsed at all.
    """
    Resource, Schema = _import_frictionless()

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    out = Path(outdir) if outdir is not None else path.parent
    out.mkdir(parents=True, exist_ok=True)

    header = parse_header(path)
    metadata_issues = _check_metadata(header)
    metadata_ok = not any(line.startswith("[FAIL]") for line in metadata_issues)

    type_issues: list[tuple[str, str, str, bool]] = []
    report = None
    data_valid = False
    if metadata_ok:
        # A unique temp file keeps concurrent inspections from colliding.
        fd, tmp_str = tempfile.mkstemp(suffix=".csv", dir=out)
        os.close(fd)
        tmp_csv = Path(tmp_str)
        try:
            data_rows = _extract_data(path, tmp_csv, header.field_delimiter)
            type_issues = _cross_check_types(header.types, data_rows, header.fields)

            # frictionless v5 rejects absolute paths outside the working directory,
            # so the temp file is addressed relative to its parent via basepath.
            schema = Schema.from_descriptor(build_frictionless_schema(header.fields, header.types, header.kind))
            resource = Resource(path=tmp_csv.name, basepath=str(tmp_csv.parent), schema=schema)
            report = resource.validate()
            data_valid = report.valid
        finally:
            if tmp_csv.exists():
                tmp_csv.unlink()

    is_valid = metadata_ok and data_valid
    report_path = out / f"{path.stem}_report.txt"
    write_report(
        path=report_path,
        artifact_name=path.name,
        kind=header.kind,
        metadata_issues=metadata_issues,
        type_issues=type_issues,
        frictionless_report=report,
        is_valid=is_valid,
    )
    logger.debug("inspected {}: valid={}", path.name, is_valid)
    return str(report_path), is_valid
