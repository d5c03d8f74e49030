"""Functional vs. non-functional classification with an NFR subcategory taxonomy.

The rule baseline is a priority-ordered keyword table: the first
subcategory table with a match decides the label; no match means
Functional (the unmarked case in requirement corpora). The subcategory
names follow the ISO 25010 quality-characteristic family, with Other as
the escape hatch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .corpus import Requirement, RequirementSet, ReqKind
from .textmatch import find_terms

RULES_RATER_ID = "rules-v1"


class Subcategory(str, Enum):
    RELIABILITY = "Reliability"
    SECURITY = "Security"
    PERFORMANCE = "Performance"
    USABILITY = "Usability"
    MAINTAINABILITY = "Maintainability"
    PORTABILITY = "Portability"
    COMPATIBILITY = "Compatibility"
    OTHER = "Other"


@dataclass(frozen=True)
class ReqClass:
    label: ReqKind
    subcategory: Subcategory | None = None

    def __post_init__(self):
        if self.label == ReqKind.NON_FUNCTIONAL and self.subcategory is None:
            raise ValueError("NonFunctional classification requires a subcategory")
        if self.label == ReqKind.FUNCTIONAL and self.subcategory is not None:
            raise ValueError("Functional classification must not carry a subcategory")


@dataclass(frozen=True)
class ClassificationRecord:
    requirement_id: str
    rater_id: str
    req_class: ReqClass
    rationale: str
    confidence: float | None = None

    def __post_init__(self):
        if not self.rater_id:
            raise ValueError("rater_id must be non-empty")


@dataclass(frozen=True)
class LabelAccuracy:
    n_scored: int
    n_correct: int
    accuracy: float | None  # absent when nothing was scorable


DEFAULT_KEYWORD_TABLES: tuple[tuple[Subcategory, tuple[str, ...]], ...] = (
    (Subcategory.SECURITY, (
        "encrypt", "encrypted", "encryption", "decrypt", "authentication",
        "authenticate", "authorization", "authorized", "authorize", "password",
        "credential", "credentials", "access control", "confidential",
        "confidentiality", "tamper", "malicious", "intrusion", "audit trail",
    )),
    (Subcategory.RELIABILITY, (
        "available", "availability", "reliability", "mtbf", "mttr",
        "failure", "failures", "fault", "failover", "recover", "recovery",
        "redundant", "redundancy", "uptime", "mean time",
    )),
    (Subcategory.PERFORMANCE, (
        "latency", "within", "throughput", "response time", "per second",
        "concurrent", "capacity", "bandwidth", "processing time",
        "startup time", "simultaneous",
    )),
    (Subcategory.USABILITY, (
        "usability", "intuitive", "user-friendly", "learnability",
        "ease of use", "accessibility", "accessible", "training",
        "human factors", "readable", "legible",
    )),
    (Subcategory.MAINTAINABILITY, (
        "maintainability", "maintainable", "modular", "configurable",
        "upgrade", "upgraded", "diagnostics", "serviceable", "maintenance",
        "firmware update", "software update",
    )),
    (Subcategory.PORTABILITY, (
        "portability", "portable", "operating system", "browser", "android",
        "ios", "windows", "linux", "platform", "migrate", "migration",
    )),
    (Subcategory.COMPATIBILITY, (
        "compatibility", "compatible", "interoperable", "interoperability",
        "interface with", "integrate with", "integration with", "coexist",
        "hl7", "dicom",
    )),
    (Subcategory.OTHER, ()),
)


@dataclass(frozen=True)
class TaxonomyConfig:
    """Priority-ordered keyword tables; earlier tables win on multi-match."""

    tables: tuple[tuple[Subcategory, tuple[str, ...]], ...] = DEFAULT_KEYWORD_TABLES

    @classmethod
    def from_file(cls, path: str | Path) -> "TaxonomyConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        tables = tuple(
            (Subcategory(entry["subcategory"]), tuple(entry["keywords"]))
            for entry in data
        )
        seen = [sub for sub, _ in tables]
        if len(seen) != len(set(seen)):
            raise ValueError("duplicate subcategory table in taxonomy config")
        return cls(tables=tables)

    def to_list(self) -> list[dict]:
        return [
            {"subcategory": sub.value, "keywords": list(keywords)}
            for sub, keywords in self.tables
        ]

    def all_keywords(self) -> set[str]:
        return {kw for _, keywords in self.tables for kw in keywords}


def classify_rule_based(
    req: Requirement, taxonomy_config: TaxonomyConfig | None = None, rater_id: str = RULES_RATER_ID
) -> ClassificationRecord:
    """Deterministic keyword classification; first matching table wins."""
    config = taxonomy_config or TaxonomyConfig()
    for subcategory, keywords in config.tables:
        hits = find_terms(req.text, keywords)
        if hits:
            matched = []
            for term, _ in hits:
                if term not in matched:
                    matched.append(term)
            return ClassificationRecord(
                requirement_id=req.id,
                rater_id=rater_id,
                req_class=ReqClass(ReqKind.NON_FUNCTIONAL, subcategory),
                rationale=f"matched {subcategory.value} keyword(s): {', '.join(matched)}",
            )
    return ClassificationRecord(
        requirement_id=req.id,
        rater_id=rater_id,
        req_class=ReqClass(ReqKind.FUNCTIONAL),
        rationale="no NFR keyword matched; functional by default",
    )


def classify_corpus(
    req_set: RequirementSet, taxonomy_config: TaxonomyConfig | None = None
) -> list[ClassificationRecord]:
    return [classify_rule_based(req, taxonomy_config) for req in req_set.requirements]


class UnknownRequirementError(Exception):
    def __init__(self, requirement_id: str):
        super().__init__(f"record refers to unknown requirement {requirement_id!r}")
        self.requirement_id = requirement_id


def score_against_hints(
    records: list[ClassificationRecord], req_set: RequirementSet
) -> LabelAccuracy:
    """Accuracy of records against author-provided kind hints, where present."""
    hints = {req.id: req.kind_hint for req in req_set.requirements}
    n_scored = 0
    n_correct = 0
    for record in records:
        if record.requirement_id not in hints:
            raise UnknownRequirementError(record.requirement_id)
        hint = hints[record.requirement_id]
        if hint is None:
            continue
        n_scored += 1
        if record.req_class.label == hint:
            n_correct += 1
    accuracy = (n_correct / n_scored) if n_scored else None
    return LabelAccuracy(n_scored=n_scored, n_correct=n_correct, accuracy=accuracy)


# --- serialization (JSON lines, one record per line) --------------------------

def record_to_dict(record: ClassificationRecord) -> dict:
    return {
        "requirement_id": record.requirement_id,
        "rater_id": record.rater_id,
        "label": record.req_class.label.value,
        "subcategory": record.req_class.subcategory.value if record.req_class.subcategory else None,
        "rationale": record.rationale,
        "confidence": record.confidence,
    }


def record_from_dict(data: dict) -> ClassificationRecord:
    subcategory = Subcategory(data["subcategory"]) if data.get("subcategory") else None
    return ClassificationRecord(
        requirement_id=data["requirement_id"],
        rater_id=data["rater_id"],
        req_class=ReqClass(ReqKind(data["label"]), subcategory),
        rationale=data["rationale"],
        confidence=data.get("confidence"),
    )


def records_to_jsonl(records: list[ClassificationRecord]) -> str:
    return "".join(json.dumps(record_to_dict(r), sort_keys=True, ensure_ascii=False) + "\n" for r in records)


def records_from_jsonl(text: str) -> list[ClassificationRecord]:
    return [record_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
