"""Deterministic quality analyzers for the seven good-requirement criteria.

Each criterion gets an explainable heuristic:

- Unambiguous: vague-term lexicon.
- Singular: coordinated-modal-clause pattern (a second modal verb after a
  coordinator starts a second requirement).
- Complete: TBD/TBR markers, dangling pronouns, missing modal or actor.
- Verifiable: unverifiable-term lexicon combined with the absence of a
  measurable quantity.
- Independent: implementation-binding lexicon; marker words (using, via,
  ...) extend evidence to the end of the clause they bind.
- Feasible: absolutes lexicon, downgraded to Warning.
- Essential: not assessable per requirement; the corpus-level pass flags
  near-duplicates instead.

All analyzers are pure and deterministic; every evidence span indexes
the original requirement text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .corpus import Requirement, RequirementSet
from .textmatch import Span, find_quantity, find_terms, fold, tokens


class Criterion(Enum):
    ESSENTIAL = "Essential"
    INDEPENDENT = "Independent"
    UNAMBIGUOUS = "Unambiguous"
    COMPLETE = "Complete"
    SINGULAR = "Singular"
    FEASIBLE = "Feasible"
    VERIFIABLE = "Verifiable"


#: The seven criteria in canonical order (definition order above).
CRITERIA: tuple[Criterion, ...] = tuple(Criterion)

_CRITERION_INDEX = {c: i for i, c in enumerate(CRITERIA)}


class Severity(str, Enum):
    VIOLATION = "Violation"
    WARNING = "Warning"
    INFO = "Info"


class Verdict(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"
    NOT_ASSESSABLE = "NotAssessable"


class Provenance(str, Enum):
    RULES_ONLY = "RulesOnly"
    LLM_ONLY = "LlmOnly"
    MERGED = "Merged"


@dataclass(frozen=True)
class Finding:
    requirement_id: str
    criterion: Criterion
    severity: Severity
    rule_id: str
    message: str
    evidence: tuple[Span, ...] = ()


@dataclass
class QualityReport:
    per_requirement: dict[str, list[Finding]]
    criterion_verdicts: dict[tuple[str, Criterion], Verdict]
    analyzer_provenance: Provenance


DEFAULT_LEXICONS: dict[str, tuple[str, ...]] = {
    "vague": (
        "appropriate", "sufficient", "adequate", "user-friendly", "fast",
        "quickly", "easily", "robust", "flexible", "and/or", "as applicable",
        "if possible", "as required", "as needed", "reasonable", "significant",
        "minimal", "maximize", "minimize", "etc", "some", "several", "various",
        "state-of-the-art", "best effort", "to the extent practical",
        "where possible", "timely", "normally", "generally",
    ),
    "unverifiable": (
        "user-friendly", "intuitive", "quickly", "fast", "easy to use",
        "easy", "easily", "seamless", "seamlessly", "efficient", "efficiently",
        "reliable", "robust", "flexible", "scalable", "maintainable",
        "convenient", "effective", "comfortable", "instantaneous", "optimal",
        "high quality", "high-performance", "responsive", "modern",
    ),
    "implementation": (
        "using", "via", "by means of", "through the use of", "by using",
        "database", "relational database", "algorithm", "sql", "java",
        "python", "c++", "javascript", "html", "xml", "json", "middleware",
        "framework", "library", "microservice", "blockchain",
        "neural network", "spreadsheet", "rest api",
    ),
    "absolutes": (
        "never", "always", "100%", "all possible", "zero defects",
        "under no circumstances", "every conceivable", "completely eliminate",
        "fail-proof", "foolproof",
    ),
}

#: Implementation-lexicon entries that bind the rest of their clause.
PHRASE_MARKERS = frozenset({"using", "via", "by means of", "through the use of", "by using"})

MODAL_RE = re.compile(r"\b(shall|must|will|should)\b")
COORDINATOR_RE = re.compile(r"\b(and|or|then)\b|;")
TBD_RE = re.compile(
    r"(?<!\w)(tbd|tbr|tbs|tbc|to be determined|to be defined|to be resolved|to be specified|to be confirmed)(?!\w)"
)
# it/they/them anywhere; demonstratives only when not used as determiners.
PRONOUN_RE = re.compile(r"\b(it|they|them)\b|\b(this|that|these|those)\b(?!\s+\w)")
CLAUSE_END_RE = re.compile(r"[.;!?]")


@dataclass(frozen=True)
class RuleConfig:
    lexicons: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_LEXICONS))
    near_duplicate_threshold: float = 0.8
    severity_overrides: dict[str, Severity] = field(default_factory=dict)
    hint_min_support: int = 3  # shared-token threshold used by refinement hints

    def lexicon(self, name: str) -> tuple[str, ...]:
        return tuple(self.lexicons.get(name, ()))

    @classmethod
    def from_file(cls, path: str | Path) -> "RuleConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        lexicons = {name: tuple(entries) for name, entries in data.get("lexicons", DEFAULT_LEXICONS).items()}
        overrides = {rule_id: Severity(sev) for rule_id, sev in data.get("severity_overrides", {}).items()}
        return cls(
            lexicons=lexicons,
            near_duplicate_threshold=float(data.get("near_duplicate_threshold", 0.8)),
            severity_overrides=overrides,
            hint_min_support=int(data.get("hint_min_support", 3)),
        )

    def to_dict(self) -> dict:
        return {
            "lexicons": {name: list(entries) for name, entries in self.lexicons.items()},
            "near_duplicate_threshold": self.near_duplicate_threshold,
            "severity_overrides": {rule_id: sev.value for rule_id, sev in self.severity_overrides.items()},
            "hint_min_support": self.hint_min_support,
        }


def _apply_overrides(findings: list[Finding], config: RuleConfig) -> list[Finding]:
    if not config.severity_overrides:
        return findings
    return [
        replace(f, severity=config.severity_overrides[f.rule_id]) if f.rule_id in config.severity_overrides else f
        for f in findings
    ]


def _clause_end(text: str, start: int) -> int:
    m = CLAUSE_END_RE.search(text, start)
    return m.start() if m else len(text)


def _comma_or_clause_end(text: str, start: int) -> int:
    m = re.search(r"[,.;!?]", text[start:])
    return start + m.start() if m else len(text)


def _dedupe_spans(hits: list[tuple[str, Span]]) -> list[Span]:
    seen: set[Span] = set()
    spans = []
    for _, span in hits:
        if span not in seen:
            seen.add(span)
            spans.append(span)
    return spans


def check_unambiguous(req: Requirement, config: RuleConfig) -> list[Finding]:
    findings = [
        Finding(
            requirement_id=req.id,
            criterion=Criterion.UNAMBIGUOUS,
            severity=Severity.VIOLATION,
            rule_id="unambiguous.vague_term",
            message=f'vague term "{req.text[span[0]:span[1]]}" permits more than one interpretation',
            evidence=(span,),
        )
        for span in _dedupe_spans(find_terms(req.text, config.lexicon("vague")))
    ]
    return _apply_overrides(findings, config)


def check_singular(req: Requirement, config: RuleConfig) -> list[Finding]:
    folded = fold(req.text)
    modals = list(MODAL_RE.finditer(folded))
    findings = []
    for prev, cur in zip(modals, modals[1:]):
        between = folded[prev.end():cur.start()]
        if COORDINATOR_RE.search(between):
            span = (cur.start(), _clause_end(req.text, cur.start()))
            findings.append(Finding(
                requirement_id=req.id,
                criterion=Criterion.SINGULAR,
                severity=Severity.VIOLATION,
                rule_id="singular.coordinated_clauses",
                message=f'coordinated modal clause "{req.text[span[0]:span[1]]}" states a second requirement',
                evidence=(span,),
            ))
    return _apply_overrides(findings, config)


def check_complete(req: Requirement, config: RuleConfig) -> list[Finding]:
    folded = fold(req.text)
    findings: list[Finding] = []

    for m in TBD_RE.finditer(folded):
        findings.append(Finding(
            requirement_id=req.id,
            criterion=Criterion.COMPLETE,
            severity=Severity.VIOLATION,
            rule_id="complete.placeholder",
            message=f'placeholder "{req.text[m.start():m.end()]}" leaves the requirement unfinished',
            evidence=((m.start(), m.end()),),
        ))

    modal = MODAL_RE.search(folded)
    if modal is None:
        findings.append(Finding(
            requirement_id=req.id,
            criterion=Criterion.COMPLETE,
            severity=Severity.VIOLATION,
            rule_id="complete.missing_modal",
            message="no normative modal verb (shall/must/will/should); the statement does not stand on its own",
        ))
    elif not re.search(r"[a-z0-9]", folded[:modal.start()]):
        findings.append(Finding(
            requirement_id=req.id,
            criterion=Criterion.COMPLETE,
            severity=Severity.VIOLATION,
            rule_id="complete.missing_actor",
            message="no actor before the modal verb; who or what is bound is unstated",
            evidence=((modal.start(), modal.end()),),
        ))

    for m in PRONOUN_RE.finditer(folded):
        findings.append(Finding(
            requirement_id=req.id,
            criterion=Criterion.COMPLETE,
            severity=Severity.WARNING,
            rule_id="complete.dangling_pronoun",
            message=f'pronoun "{req.text[m.start():m.end()]}" has no antecedent within the statement',
            evidence=((m.start(), m.end()),),
        ))
    return _apply_overrides(findings, config)


def check_verifiable(req: Requirement, config: RuleConfig) -> list[Finding]:
    spans = _dedupe_spans(find_terms(req.text, config.lexicon("unverifiable")))
    if not spans or find_quantity(req.text) is not None:
        return []
    terms = ", ".join(f'"{req.text[s[0]:s[1]]}"' for s in spans)
    findings = [Finding(
        requirement_id=req.id,
        criterion=Criterion.VERIFIABLE,
        severity=Severity.VIOLATION,
        rule_id="verifiable.unmeasurable_term",
        message=f"{terms} cannot be verified: no measurable quantity or comparator is stated",
        evidence=tuple(spans),
    )]
    return _apply_overrides(findings, config)


def check_independent(req: Requirement, config: RuleConfig) -> list[Finding]:
    findings: list[Finding] = []
    covered: list[Span] = []
    for term, span in find_terms(req.text, config.lexicon("implementation")):
        if any(span[0] >= c[0] and span[1] <= c[1] for c in covered):
            continue  # already inside a marker phrase
        if term in PHRASE_MARKERS:
            span = (span[0], _comma_or_clause_end(req.text, span[1]))
            covered.append(span)
        phrase = req.text[span[0]:span[1]]
        findings.append(Finding(
            requirement_id=req.id,
            criterion=Criterion.INDEPENDENT,
            severity=Severity.VIOLATION,
            rule_id="independent.implementation_binding",
            message=f'"{phrase}" prescribes a solution instead of expressing the need',
            evidence=(span,),
        ))
    return _apply_overrides(findings, config)


def check_feasible(req: Requirement, config: RuleConfig) -> list[Finding]:
    findings = [
        Finding(
            requirement_id=req.id,
            criterion=Criterion.FEASIBLE,
            severity=Severity.WARNING,
            rule_id="feasible.absolute_term",
            message=f'absolute "{req.text[span[0]:span[1]]}" is rarely implementable as stated',
            evidence=(span,),
        )
        for span in _dedupe_spans(find_terms(req.text, config.lexicon("absolutes")))
    ]
    return _apply_overrides(findings, config)


def check_essential(req: Requirement, config: RuleConfig) -> list[Finding]:
    # Necessity needs corpus context; the corpus pass flags near-duplicates.
    return []


_CHECKERS = (
    check_essential,
    check_independent,
    check_unambiguous,
    check_complete,
    check_singular,
    check_feasible,
    check_verifiable,
)


def _sort_findings(findings: list[Finding]) -> list[Finding]:
    return sorted(
        findings,
        key=lambda f: (
            _CRITERION_INDEX[f.criterion],
            f.evidence[0][0] if f.evidence else -1,
            f.rule_id,
            f.message,
        ),
    )


def analyze_requirement(req: Requirement, config: RuleConfig | None = None) -> list[Finding]:
    """All rule findings for one requirement, sorted by (criterion, span start)."""
    config = config or RuleConfig()
    findings: list[Finding] = []
    for checker in _CHECKERS:
        findings.extend(checker(req, config))
    return _sort_findings(findings)


def jaccard_similarity(text_a: str, text_b: str) -> float:
    """Token-level Jaccard on lowercased word sets."""
    set_a, set_b = set(tokens(text_a)), set(tokens(text_b))
    if not set_a and not set_b:
        return 1.0
    return len(set_a & set_b) / len(set_a | set_b)


def find_near_duplicates(
    req_set: RequirementSet, threshold: float
) -> list[tuple[str, str, float]]:
    """Pairs with Jaccard similarity >= threshold, each once with id_a < id_b."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    reqs = req_set.requirements
    pairs = []
    for i in range(len(reqs)):
        for j in range(i + 1, len(reqs)):
            sim = jaccard_similarity(reqs[i].text, reqs[j].text)
            if sim >= threshold:
                id_a, id_b = sorted((reqs[i].id, reqs[j].id))
                pairs.append((id_a, id_b, sim))
    pairs.sort(key=lambda p: (p[0], p[1]))
    return pairs


def verdicts_for(req_id: str, findings: list[Finding]) -> dict[tuple[str, Criterion], Verdict]:
    """Fail iff a Violation exists; Essential stays NotAssessable in the rule layer."""
    verdicts = {}
    violated = {f.criterion for f in findings if f.severity == Severity.VIOLATION}
    for criterion in CRITERIA:
        if criterion == Criterion.ESSENTIAL:
            verdicts[(req_id, criterion)] = Verdict.NOT_ASSESSABLE
        else:
            verdicts[(req_id, criterion)] = Verdict.FAIL if criterion in violated else Verdict.PASS
    return verdicts


def analyze_corpus(req_set: RequirementSet, config: RuleConfig | None = None) -> QualityReport:
    """Per-requirement analysis plus corpus-level near-duplicate findings."""
    config = config or RuleConfig()
    per_requirement = {req.id: analyze_requirement(req, config) for req in req_set.requirements}

    dup_partner: dict[str, list[tuple[str, float]]] = {}
    for id_a, id_b, sim in find_near_duplicates(req_set, config.near_duplicate_threshold):
        dup_partner.setdefault(id_a, []).append((id_b, sim))
        dup_partner.setdefault(id_b, []).append((id_a, sim))
    for req_id, partners in dup_partner.items():
        dup_findings = [
            Finding(
                requirement_id=req_id,
                criterion=Criterion.ESSENTIAL,
                severity=Severity.WARNING,
                rule_id="essential.near_duplicate",
                message=f'near-duplicate of "{other}" (similarity {sim:.3f}); one of the two may be unnecessary',
            )
            for other, sim in sorted(partners)
        ]
        per_requirement[req_id] = _sort_findings(per_requirement[req_id] + _apply_overrides(dup_findings, config))

    criterion_verdicts: dict[tuple[str, Criterion], Verdict] = {}
    for req in req_set.requirements:
        criterion_verdicts.update(verdicts_for(req.id, per_requirement[req.id]))
    return QualityReport(
        per_requirement=per_requirement,
        criterion_verdicts=criterion_verdicts,
        analyzer_provenance=Provenance.RULES_ONLY,
    )


# --- serialization (stable key order) ----------------------------------------

def finding_to_dict(f: Finding) -> dict:
    return {
        "requirement_id": f.requirement_id,
        "criterion": f.criterion.value,
        "severity": f.severity.value,
        "rule_id": f.rule_id,
        "message": f.message,
        "evidence": [list(span) for span in f.evidence],
    }


def finding_from_dict(data: dict) -> Finding:
    return Finding(
        requirement_id=data["requirement_id"],
        criterion=Criterion(data["criterion"]),
        severity=Severity(data["severity"]),
        rule_id=data["rule_id"],
        message=data["message"],
        evidence=tuple((int(s), int(e)) for s, e in data["evidence"]),
    )


def report_to_dict(report: QualityReport) -> dict:
    verdicts: dict[str, dict[str, str]] = {}
    for (req_id, criterion), verdict in report.criterion_verdicts.items():
        verdicts.setdefault(req_id, {})[criterion.value] = verdict.value
    return {
        "analyzer_provenance": report.analyzer_provenance.value,
        "per_requirement": {
            req_id: [finding_to_dict(f) for f in findings]
            for req_id, findings in report.per_requirement.items()
        },
        "criterion_verdicts": {
            req_id: {c.value: verdicts[req_id][c.value] for c in CRITERIA if c.value in verdicts[req_id]}
            for req_id in verdicts
        },
    }


def report_from_dict(data: dict) -> QualityReport:
    per_requirement = {
        req_id: [finding_from_dict(f) for f in findings]
        for req_id, findings in data["per_requirement"].items()
    }
    criterion_verdicts = {
        (req_id, Criterion(name)): Verdict(v)
        for req_id, by_criterion in data["criterion_verdicts"].items()
        for name, v in by_criterion.items()
    }
    return QualityReport(
        per_requirement=per_requirement,
        criterion_verdicts=criterion_verdicts,
        analyzer_provenance=Provenance(data["analyzer_provenance"]),
    )


def report_to_json(report: QualityReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
