"""Canonical artifact header parser, the one implementation every reader shares.

Parses [METADATA] and [FIELDS] sections of a stepnav text artifact.
Stops at # [DATA] and does not read data rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .exceptions import ParseError

MAGIC = "# stepnav"
FORMAT_VERSION = "1.0"


@dataclass
class ArtifactHeader:
    version: str
    metadata: dict[str, str]
    fields_meta: dict[str, list[str]]
    field_delimiter: str

    @property
    def kind(self) -> str:
        return self.metadata.get("kind", "")

    @property
    def fields(self) -> list[str]:
        return self.fields_meta.get("fields", [])

    @property
    def types(self) -> list[str]:
        return self.fields_meta.get("types", [])


def is_artifact(path: Path) -> bool:
    """Return True if the file's first line marks it as a stepnav artifact."""
    try:
        # utf-8-sig strips the BOM if present
        with open(path, "r", encoding="utf-8-sig") as fh:
            return fh.readline().strip().startswith(MAGIC)
    except (OSError, UnicodeDecodeError):
        return False


def parse_header(path: Path) -> ArtifactHeader:
    """
    Parse [METADATA] and [FIELDS] sections of an artifact.

    field_delimiter is read from metadata before the FIELDS section is split,
    so key order in the file does not matter.
    Raises ParseError if the file is unreadable, lacks the magic line, or has no
    [METADATA] section.
    """
    metadata: dict[str, str] = {}
    raw_fields: dict[str, str] = {}  # key → unsplit value string; split after delimiter known
    section: str | None = None
    version = ""

    try:
        with open(path, "r", encoding="utf-8-sig") as fh:
            first = fh.readline().strip()
            if not first.startswith(MAGIC):
                raise ParseError(f"{Path(path).name}: not a stepnav artifact (missing '{MAGIC}' line)")
            parts = first.split()
            version = parts[2] if len(parts) > 2 else ""

            for line in fh:
                stripped = line.rstrip("\r\n")

                if not stripped.startswith("#"):
                    continue

                content = stripped.lstrip("#").strip()

                if content == "[METADATA]":
                    section = "metadata"
                    continue
                if content == "[FIELDS]":
                    section = "fields"
                    continue
                if content == "[DATA]":
                    break

                if not content or "=" not in content or section is None:
                    continue

                key, _, val = content.partition("=")
                key = key.strip()
                val = val.strip()

                if section == "metadata":
                    metadata[key] = val
                else:
                    raw_fields[key] = val

    except OSError as e:
        raise ParseError(f"Cannot read {path}: {e}") from e

    if not metadata:
        raise ParseError(f"{Path(path).name}: no [METADATA] section found or file is empty")
    if version != FORMAT_VERSION:
        raise ParseError(f"{Path(path).name}: unsupported format version {version!r}")

    field_delimiter = metadata.get("field_delimiter", "|")
    fields_meta = {
        k: [v.strip() for v in raw.split(field_delimiter)]
        for k, raw in raw_fields.items()
    }

    return ArtifactHeader(
        version=version,
        metadata=metadata,
        fields_meta=fields_meta,
        field_delimiter=field_delimiter,
    )
