"""Write and read header-sectioned text artifacts.

Layout (one artifact per file):
    # stepnav 1.0 UTF-8
    # [METADATA]
    # kind = trace
    # field_delimiter = |
    # ...
    # [FIELDS]
    # fields = step|reward|...
    # types = integer|number|...
    # [DATA]
    step|reward|...
    0|0.53|...

Writes go to a temporary sibling that is renamed into place, so a failed
command never leaves a partial artifact behind.
"""
from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from ._parser import FORMAT_VERSION, ArtifactHeader, parse_header
from .exceptions import ParseError

DELIMITER = "|"


@dataclass
class Artifact:
    header: ArtifactHeader
    rows: list[list[str]]

    @property
    def metadata(self) -> dict[str, str]:
        return self.header.metadata

    def column(self, name: str) -> list[str]:
        idx = self.header.fields.index(name)
        return [row[idx] for row in self.rows]


def write_artifact(
    path: Union[str, Path],
    kind: str,
    metadata: dict[str, str],
    fields: Sequence[str],
    types: Sequence[str],
    rows: Iterable[Sequence[object]],
) -> Path:
    """Atomically write an artifact. Metadata values must not contain newlines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bad = [f for f in fields if DELIMITER in f]
    if bad:
        raise ValueError(f"field names contain the delimiter '{DELIMITER}': {bad}")

    header_meta = {"kind": kind, "field_delimiter": DELIMITER, **metadata}
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# stepnav {FORMAT_VERSION} UTF-8\n")
            fh.write("# [METADATA]\n")
            for k, v in header_meta.items():
                fh.write(f"# {k} = {v}\n")
            fh.write("\n")
            fh.write("# [FIELDS]\n")
            fh.write(f"# fields = {DELIMITER.join(fields)}\n")
            fh.write(f"# types = {DELIMITER.join(types)}\n")
            fh.write("\n")
            fh.write("# [DATA]\n")
            writer = csv.writer(fh, delimiter=DELIMITER, lineterminator="\n")
            writer.writerow(fields)
            for row in rows:
                writer.writerow(["" if v is None else v for v in row])
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def iter_data_rows(path: Path, delimiter: str) -> Iterable[list[str]]:
    """Yield rows after # [DATA], column-header row included first."""
    in_data = False
    with open(path, "r", encoding="utf-8-sig") as fh:
        for line in fh:
            if line.strip() == "# [DATA]":
                in_data = True
                continue
            if not in_data:
                continue
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield list(csv.reader([line.rstrip("\r\n")], delimiter=delimiter))[0]


def read_artifact(path: Union[str, Path], expected_kind: Optional[str] = None) -> Artifact:
    """Parse header and data rows. Raises ParseError on kind or width mismatch."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    header = parse_header(path)
    if expected_kind and header.kind != expected_kind:
        raise ParseError(f"{path.name}: expected a '{expected_kind}' artifact, found '{header.kind}'")

    rows = iter_data_rows(path, header.field_delimiter)
    column_row = next(rows, None)
    if column_row is None:
        raise ParseError(f"{path.name}: no [DATA] section found")
    if column_row != header.fields:
        raise ParseError(f"{path.name}: data header {column_row} does not match declared fields {header.fields}")
    data = list(rows)
    width = len(header.fields)
    for n, row in enumerate(data, start=1):
        if len(row) != width:
            raise ParseError(f"{path.name}: data row {n} has {len(row)} values, expected {width}")
    return Artifact(header=header, rows=data)
