"""Preliminary test-specification generation from analyzed requirements.

Verification methods follow the conventional IADT set. The decision
table is deterministic:

1. Verifiable verdict Fail -> Blocked, citing the verifiability findings.
2. Measurable quantity present -> Test.
3. Functional without a measurable quantity -> Demonstration.
4. NonFunctional Reliability/Performance without one -> Analysis.
5. Remaining NonFunctional -> Inspection.

Blocked is a first-class outcome: an unverifiable requirement is the
finding worth surfacing, not an error.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum

from .corpus import ReqKind, Requirement, RequirementSet
from .llm_bridge import (
    LlmError,
    LlmProfile,
    PromptBundle,
    SchemaViolationError,
    Task,
    build_prompt,
    make_transport,
    request_structured,
)
from .quality_rules import Criterion, Finding, QualityReport, Verdict
from .taxonomy import ClassificationRecord, Subcategory
from .textmatch import find_quantity


class Method(str, Enum):
    TEST = "Test"
    DEMONSTRATION = "Demonstration"
    ANALYSIS = "Analysis"
    INSPECTION = "Inspection"


class SpecProvenance(str, Enum):
    TEMPLATE = "Template"
    LLM_DRAFT = "LlmDraft"


@dataclass(frozen=True)
class TestSpec:
    spec_id: str
    requirement_id: str
    method: Method
    objective: str
    preconditions: tuple[str, ...]
    steps: tuple[str, ...]
    expected_result: str
    pass_criteria: str
    provenance: SpecProvenance

    def __post_init__(self):
        if not self.steps:
            raise ValueError("steps must be non-empty")
        if not self.pass_criteria:
            raise ValueError("pass_criteria must be non-empty")


@dataclass(frozen=True)
class Blocked:
    requirement_id: str
    reason: str
    findings: tuple[Finding, ...]  # at least one Verifiable finding


class MissingAnalysisError(Exception):
    def __init__(self, requirement_id: str):
        super().__init__(f"requirement {requirement_id!r} is not covered by the quality report")
        self.requirement_id = requirement_id


def assign_method(
    req: Requirement, report: QualityReport, record: ClassificationRecord
) -> Method | Blocked:
    verdict = report.criterion_verdicts.get((req.id, Criterion.VERIFIABLE))
    if verdict is None:
        raise MissingAnalysisError(req.id)
    if verdict == Verdict.FAIL:
        findings = tuple(
            f for f in report.per_requirement.get(req.id, ())
            if f.criterion == Criterion.VERIFIABLE
        )
        reasons = "; ".join(f.message for f in findings) or "verifiability violation"
        return Blocked(requirement_id=req.id, reason=f"not verifiable as stated: {reasons}", findings=findings)
    if find_quantity(req.text) is not None:
        return Method.TEST
    if record.req_class.label == ReqKind.FUNCTIONAL:
        return Method.DEMONSTRATION
    if record.req_class.subcategory in (Subcategory.RELIABILITY, Subcategory.PERFORMANCE):
        return Method.ANALYSIS
    return Method.INSPECTION


_MODAL_RE = re.compile(r"\b(shall|must|will|should)\b", re.IGNORECASE)
_CONDITION_RE = re.compile(r"\b(when|whenever|if|upon|while|after|before|in case)\b", re.IGNORECASE)


def _split_statement(text: str) -> tuple[str, str, str]:
    """(subject, behavior, condition) slots for template fill; best-effort parse."""
    body = text.strip().rstrip(".")
    condition = ""
    cond_match = _CONDITION_RE.search(body)
    if cond_match:
        cond_end = len(body)
        comma = body.find(",", cond_match.start())
        # Leading condition runs to the comma; trailing condition runs to the end.
        if cond_match.start() == 0 and comma != -1:
            cond_end = comma
        condition = body[cond_match.start():cond_end].strip()
        body = (body[:cond_match.start()] + body[cond_end:]).strip(" ,")
    modal_match = _MODAL_RE.search(body)
    if modal_match:
        subject = body[:modal_match.start()].strip(" ,") or "the system"
        behavior = body[modal_match.end():].strip(" ,")
    else:
        subject = "the system"
        behavior = body
    return subject, behavior, condition


def generate_spec_template(
    req: Requirement, method: Method, record: ClassificationRecord
) -> TestSpec:
    """Deterministic per-method template fill; thresholds are quoted verbatim."""
    subject, behavior, condition = _split_statement(req.text)
    quantity = find_quantity(req.text)
    label = record.req_class.label.value
    subcategory = record.req_class.subcategory.value if record.req_class.subcategory else None
    trait = f"{label}/{subcategory}" if subcategory else label

    preconditions = [
        "System installed and operational in a representative environment",
        f"Requirement {req.id} reviewed and its inputs available",
    ]

    if method == Method.TEST:
        steps = [
            f"Instrument {subject} so the stated quantity can be measured",
            f"Trigger the condition: {condition}" if condition else f"Exercise the behavior: {behavior}",
            "Record the measured value over three repeated runs",
            "Compare each measured value against the stated threshold",
        ]
        threshold = quantity.text if quantity else behavior
        expected = f"{subject} {behavior}".strip()
        pass_criteria = f'Every measured value satisfies "{threshold}"'
        objective = f"Measure that {subject} meets {req.id}: {behavior}"
    elif method == Method.DEMONSTRATION:
        steps = [
            f"Set up {subject} in its normal operating state",
            f"Trigger the condition: {condition}" if condition else f"Invoke the behavior: {behavior}",
            f"Observe that {subject} performs the stated behavior: {behavior}",
        ]
        expected = f"{subject} {behavior}".strip()
        pass_criteria = f"Observed behavior matches {req.id} in every demonstration run"
        objective = f"Demonstrate that {subject} meets {req.id}: {behavior}"
    elif method == Method.ANALYSIS:
        steps = [
            f"Collect design data and operational records relevant to {req.id}",
            f"Model or compute the {trait} attribute addressed by the requirement",
            "Document assumptions and compare the analysis result with the stated need",
        ]
        expected = f"Analysis shows {subject} {behavior}".strip()
        pass_criteria = f"Analysis result supports {req.id} under documented assumptions"
        objective = f"Analyze whether {subject} meets {req.id}: {behavior}"
    else:  # Inspection
        steps = [
            f"Identify the design artifacts and configuration items that realize {req.id}",
            f"Inspect them for the stated property: {behavior}",
            "Record objective evidence for each inspected item",
        ]
        expected = f"Inspection evidence shows {subject} {behavior}".strip()
        pass_criteria = f"All inspected items exhibit the property stated in {req.id}"
        objective = f"Inspect that {subject} meets {req.id}: {behavior}"

    if quantity and quantity.text not in pass_criteria:
        pass_criteria += f' (stated threshold: "{quantity.text}")'

    return TestSpec(
        spec_id=f"TS-{req.id}",
        requirement_id=req.id,
        method=method,
        objective=objective,
        preconditions=tuple(preconditions),
        steps=tuple(steps),
        expected_result=expected,
        pass_criteria=pass_criteria,
        provenance=SpecProvenance.TEMPLATE,
    )


def _validate_draft(data: object, req: Requirement, method: Method) -> dict:
    if not isinstance(data, dict):
        raise SchemaViolationError("draft is not a JSON object")
    if data.get("requirement_id") != req.id:
        raise SchemaViolationError("draft names the wrong requirement")
    steps = data.get("steps")
    if not isinstance(steps, list) or not steps or any(not str(s).strip() for s in steps):
        raise SchemaViolationError("draft steps must be a non-empty list of non-empty strings")
    pass_criteria = str(data.get("pass_criteria", ""))
    if not pass_criteria.strip():
        raise SchemaViolationError("draft pass_criteria must be non-empty")
    quantity = find_quantity(req.text)
    if quantity is not None and quantity.text not in pass_criteria:
        raise SchemaViolationError(f'draft pass_criteria must quote the stated threshold "{quantity.text}"')
    return data


def generate_spec_llm(
    profile: LlmProfile,
    req: Requirement,
    method: Method,
    record: ClassificationRecord,
    *,
    transport=None,
) -> TestSpec:
    """LLM-drafted spec; falls back to the template when the draft stays invalid."""
    if isinstance(method, Blocked):
        raise ValueError("cannot generate a spec for a Blocked requirement")
    label = record.req_class.label.value
    bundle = build_prompt(
        Task.TEST_DRAFT, req,
        extra={"method": method.value, "label": label},
    )
    transport = transport or make_transport(profile)
    try:
        draft, _ = request_structured(
            profile, bundle, lambda data: _validate_draft(data, req, method), transport
        )
    except LlmError:
        return generate_spec_template(req, method, record)
    assert isinstance(draft, dict)
    return TestSpec(
        spec_id=f"TS-{req.id}",
        requirement_id=req.id,
        method=method,
        objective=str(draft.get("objective", f"Verify {req.id}")),
        preconditions=tuple(str(p) for p in draft.get("preconditions", [])),
        steps=tuple(str(s) for s in draft["steps"]),
        expected_result=str(draft.get("expected_result", req.text)),
        pass_criteria=str(draft["pass_criteria"]),
        provenance=SpecProvenance.LLM_DRAFT,
    )


def generate_suite(
    req_set: RequirementSet,
    report: QualityReport,
    records: list[ClassificationRecord],
    mode: str = "TemplateOnly",
    profile: LlmProfile | None = None,
    *,
    transport=None,
) -> tuple[list[TestSpec], list[Blocked]]:
    """Exactly one TestSpec or one Blocked per requirement, in corpus order."""
    if mode not in ("TemplateOnly", "LlmWithFallback"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "LlmWithFallback" and profile is None:
        raise ValueError("LlmWithFallback mode requires a profile")
    by_id = {r.requirement_id: r for r in records}
    specs: list[TestSpec] = []
    blocked: list[Blocked] = []
    for req in req_set.requirements:
        record = by_id.get(req.id)
        if record is None:
            raise MissingAnalysisError(req.id)
        outcome = assign_method(req, report, record)
        if isinstance(outcome, Blocked):
            blocked.append(outcome)
            continue
        if mode == "LlmWithFallback":
            specs.append(generate_spec_llm(profile, req, outcome, record, transport=transport))
        else:
            specs.append(generate_spec_template(req, outcome, record))
    return specs, blocked


# --- serialization ------------------------------------------------------------

def spec_to_dict(spec: TestSpec) -> dict:
    return {
        "spec_id": spec.spec_id,
        "requirement_id": spec.requirement_id,
        "method": spec.method.value,
        "objective": spec.objective,
        "preconditions": list(spec.preconditions),
        "steps": list(spec.steps),
        "expected_result": spec.expected_result,
        "pass_criteria": spec.pass_criteria,
        "provenance": spec.provenance.value,
    }


def blocked_to_dict(item: Blocked) -> dict:
    from .quality_rules import finding_to_dict

    return {
        "requirement_id": item.requirement_id,
        "reason": item.reason,
        "findings": [finding_to_dict(f) for f in item.findings],
    }


def suite_to_dict(specs: list[TestSpec], blocked: list[Blocked]) -> dict:
    return {
        "specs": [spec_to_dict(s) for s in specs],
        "blocked": [blocked_to_dict(b) for b in blocked],
    }


def suite_to_json(specs: list[TestSpec], blocked: list[Blocked]) -> str:
    return json.dumps(suite_to_dict(specs, blocked), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_suite_text(specs: list[TestSpec], blocked: list[Blocked]) -> str:
    lines = []
    for spec in specs:
        lines.append(f"=== {spec.spec_id} ({spec.method.value}, {spec.provenance.value}) ===")
        lines.append(f"requirement: {spec.requirement_id}")
        lines.append(f"objective: {spec.objective}")
        lines.append("preconditions:")
        lines.extend(f"  - {p}" for p in spec.preconditions)
        lines.append("steps:")
        lines.extend(f"  {i}. {s}" for i, s in enumerate(spec.steps, start=1))
        lines.append(f"expected result: {spec.expected_result}")
        lines.append(f"pass criteria: {spec.pass_criteria}")
        lines.append("")
    if blocked:
        lines.append("=== blocked requirements ===")
        for item in blocked:
            lines.append(f"{item.requirement_id}: {item.reason}")
    return "\n".join(lines) + "\n"
