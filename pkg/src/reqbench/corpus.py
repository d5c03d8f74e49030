"""Requirement data model and corpus ingestion/persistence (JSON and CSV).

A corpus is an ordered set of requirement statements with provenance
metadata. Loaders are strict (malformed input names the first offending
record); in-memory construction is permissive so that `validate_corpus`
can report invariant violations on any set.

File contracts:
- JSON: ``{"schema_version": 1, "name": ..., "requirements": [...]}``,
  unknown fields rejected.
- CSV: columns ``id,level,text,kind_hint,tags,source`` with RFC-4180
  quoting; tags serialized ``;``-joined. Row numbers count the header
  as row 1.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path


class Level(str, Enum):
    STAKEHOLDER = "Stakeholder"
    SYSTEM = "System"


class ReqKind(str, Enum):
    """Functional/non-functional label shared by hints, raters, and records."""

    FUNCTIONAL = "Functional"
    NON_FUNCTIONAL = "NonFunctional"


@dataclass(frozen=True)
class Requirement:
    id: str
    text: str
    level: Level
    kind_hint: ReqKind | None = None
    tags: tuple[str, ...] = ()
    source: str | None = None


@dataclass(frozen=True)
class RequirementSet:
    """Immutable after load; share read-only, mutate by constructing anew."""

    name: str
    requirements: tuple[Requirement, ...] = ()
    schema_version: int = 1

    def __len__(self) -> int:
        return len(self.requirements)

    def __iter__(self):
        return iter(self.requirements)

    def by_id(self, requirement_id: str) -> Requirement:
        for req in self.requirements:
            if req.id == requirement_id:
                return req
        raise KeyError(requirement_id)

    def ids(self) -> list[str]:
        return [req.id for req in self.requirements]


@dataclass(frozen=True)
class CorpusIssue:
    kind: str  # "duplicate_id" | "empty_text" | "empty_id"
    requirement_id: str
    positions: tuple[int, ...]  # 0-based indexes into the set
    message: str


class CorpusError(Exception):
    """Base for corpus ingestion/persistence failures."""


class UnknownFormatError(CorpusError):
    def __init__(self, path: str):
        super().__init__(f"cannot infer corpus format from {path!r} (expected .json or .csv)")
        self.path = path


class ParseError(CorpusError):
    def __init__(self, message: str, *, position: int | str | None = None):
        where = f" at record {position}" if position is not None else ""
        super().__init__(f"{message}{where}")
        self.position = position


class DuplicateIdError(CorpusError):
    def __init__(self, requirement_id: str, positions: list[int]):
        rows = ", ".join(str(p) for p in positions)
        super().__init__(f"duplicate requirement id {requirement_id!r} at records {rows}")
        self.requirement_id = requirement_id
        self.positions = tuple(positions)


class EmptyTextError(CorpusError):
    def __init__(self, requirement_id: str, position: int):
        super().__init__(f"requirement {requirement_id!r} has empty text (record {position})")
        self.requirement_id = requirement_id
        self.position = position


CSV_COLUMNS = ["id", "level", "text", "kind_hint", "tags", "source"]

_JSON_ENVELOPE_KEYS = {"schema_version", "name", "requirements"}
_JSON_REQUIREMENT_KEYS = {"id", "text", "level", "kind_hint", "tags", "source"}


def _parse_level(raw: str, position: int | str) -> Level:
    try:
        return Level(raw)
    except ValueError:
        raise ParseError(f"invalid level {raw!r} (expected Stakeholder or System)", position=position) from None


def _parse_kind(raw: str | None, position: int | str) -> ReqKind | None:
    if raw is None or raw == "":
        return None
    try:
        return ReqKind(raw)
    except ValueError:
        raise ParseError(f"invalid kind_hint {raw!r} (expected Functional or NonFunctional)", position=position) from None


def _check_record(req_id: str, text: str, position: int, seen: dict[str, int]) -> None:
    if not req_id or not req_id.strip():
        raise ParseError("requirement id is empty", position=position)
    if req_id in seen:
        raise DuplicateIdError(req_id, [seen[req_id], position])
    if not text.strip():
        raise EmptyTextError(req_id, position)
    seen[req_id] = position


def _requirement_from_json(obj: object, position: int) -> Requirement:
    if not isinstance(obj, dict):
        raise ParseError("requirement entry is not an object", position=position)
    unknown = set(obj) - _JSON_REQUIREMENT_KEYS
    if unknown:
        raise ParseError(f"unknown requirement field(s): {sorted(unknown)}", position=position)
    for key in ("id", "text", "level"):
        if key not in obj:
            raise ParseError(f"missing required field {key!r}", position=position)
    tags = obj.get("tags", [])
    if not isinstance(tags, list) or any(not isinstance(t, str) for t in tags):
        raise ParseError("tags must be a list of strings", position=position)
    source = obj.get("source")
    if source is not None and not isinstance(source, str):
        raise ParseError("source must be a string or null", position=position)
    return Requirement(
        id=str(obj["id"]),
        text=str(obj["text"]).strip(),
        level=_parse_level(obj["level"], position),
        kind_hint=_parse_kind(obj.get("kind_hint"), position),
        tags=tuple(tags),
        source=source,
    )


def _load_json(path: Path) -> RequirementSet:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("corpus file must contain a JSON object")
    unknown = set(data) - _JSON_ENVELOPE_KEYS
    if unknown:
        raise ParseError(f"unknown envelope field(s): {sorted(unknown)}")
    if "schema_version" not in data or "requirements" not in data:
        raise ParseError("envelope must contain schema_version and requirements")
    if data["schema_version"] != 1:
        raise ParseError(f"unsupported schema_version {data['schema_version']!r}")
    if not isinstance(data["requirements"], list):
        raise ParseError("requirements must be a list")

    seen: dict[str, int] = {}
    requirements = []
    for position, obj in enumerate(data["requirements"], start=1):
        req = _requirement_from_json(obj, position)
        _check_record(req.id, req.text, position, seen)
        requirements.append(req)
    return RequirementSet(
        name=str(data.get("name", "")),
        requirements=tuple(requirements),
        schema_version=1,
    )


def _load_csv(path: Path) -> RequirementSet:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("CSV file is empty (no header)")
        if list(reader.fieldnames) != CSV_COLUMNS:
            raise ParseError(f"unexpected CSV header {reader.fieldnames} (expected {CSV_COLUMNS})")
        seen: dict[str, int] = {}
        requirements = []
        # Header is row 1, first data record row 2.
        for position, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise ParseError("wrong number of columns", position=position)
            tags = tuple(t for t in row["tags"].split(";") if t) if row["tags"] else ()
            req = Requirement(
                id=row["id"],
                text=row["text"].strip(),
                level=_parse_level(row["level"], position),
                kind_hint=_parse_kind(row["kind_hint"], position),
                tags=tags,
                source=row["source"] or None,
            )
            _check_record(req.id, req.text, position, seen)
            requirements.append(req)
    return RequirementSet(name=path.stem, requirements=tuple(requirements), schema_version=1)


def load_corpus(path: str | Path, format: str = "Auto") -> RequirementSet:
    """Load a corpus, preserving input order. `format` is Json, Csv, or Auto."""
    path = Path(path)
    if format == "Auto":
        suffix = path.suffix.lower()
        if suffix == ".json":
            format = "Json"
        elif suffix == ".csv":
            format = "Csv"
        else:
            raise UnknownFormatError(str(path))
    if format == "Json":
        return _load_json(path)
    if format == "Csv":
        return _load_csv(path)
    raise UnknownFormatError(str(path))


def _requirement_to_json(req: Requirement) -> dict:
    return {
        "id": req.id,
        "text": req.text,
        "level": req.level.value,
        "kind_hint": req.kind_hint.value if req.kind_hint else None,
        "tags": list(req.tags),
        "source": req.source,
    }


def save_corpus(req_set: RequirementSet, path: str | Path, format: str = "Json") -> None:
    """Persist a corpus so that `load_corpus` reproduces it field-for-field."""
    path = Path(path)
    if format == "Json":
        envelope = {
            "schema_version": req_set.schema_version,
            "name": req_set.name,
            "requirements": [_requirement_to_json(r) for r in req_set.requirements],
        }
        path.write_text(json.dumps(envelope, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    elif format == "Csv":
        for req in req_set.requirements:
            # The ;-join contract cannot represent these; refuse rather than corrupt.
            if any(";" in tag or tag == "" for tag in req.tags):
                raise CorpusError(f"requirement {req.id!r}: tags with ';' or empty tags are not representable in CSV")
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for req in req_set.requirements:
                writer.writerow([
                    req.id,
                    req.level.value,
                    req.text,
                    req.kind_hint.value if req.kind_hint else "",
                    ";".join(req.tags),
                    req.source or "",
                ])
    else:
        raise UnknownFormatError(format)


def validate_corpus(req_set: RequirementSet) -> list[CorpusIssue]:
    """Total function: empty list iff all corpus invariants hold."""
    issues: list[CorpusIssue] = []
    positions_by_id: dict[str, list[int]] = {}
    for idx, req in enumerate(req_set.requirements):
        positions_by_id.setdefault(req.id, []).append(idx)
        if not req.id.strip():
            issues.append(CorpusIssue("empty_id", req.id, (idx,), f"requirement at index {idx} has an empty id"))
        if not req.text.strip():
            issues.append(CorpusIssue("empty_text", req.id, (idx,), f"requirement {req.id!r} has empty text"))
    for req_id, positions in positions_by_id.items():
        if len(positions) > 1:
            issues.append(CorpusIssue(
                "duplicate_id",
                req_id,
                tuple(positions),
                f"id {req_id!r} occurs at indexes {positions}",
            ))
    return issues
