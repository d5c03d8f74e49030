"""Provider-agnostic LLM adapter with structured prompts and an offline mock.

Remote endpoints speak either the OpenAI-compatible chat-completions
shape or the Anthropic-compatible messages shape; Llama-family models
are reached through any OpenAI-compatible host. Secrets come only from
the environment variable named in the profile, never from config files.

The Mock endpoint kind is a real transport: it renders JSON text that
flows through the same parsing/validation/repair path as remote
responses, so the whole test suite runs without network access. Its
default behavior derives verdicts deterministically from the rule
analyzers; scripted directives inject failure modes.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable

import httpx

from .corpus import Level, ReqKind, Requirement, RequirementSet
from .quality_rules import (
    CRITERIA,
    Criterion,
    Finding,
    Provenance,
    QualityReport,
    RuleConfig,
    Severity,
    Verdict,
    analyze_requirement,
)
from .taxonomy import ClassificationRecord, ReqClass, Subcategory, TaxonomyConfig, classify_rule_based


class EndpointKind(str, Enum):
    OPENAI_CHAT = "OpenAiCompatibleChat"
    ANTHROPIC_MESSAGES = "AnthropicCompatibleMessages"
    MOCK = "Mock"


class Task(str, Enum):
    CRITERIA_ASSESSMENT = "CriteriaAssessment"
    FNF_CLASSIFICATION = "FnfClassification"
    TEST_DRAFT = "TestDraft"


SCHEMA_IDS = {
    Task.CRITERIA_ASSESSMENT: "criteria.v1",
    Task.FNF_CLASSIFICATION: "fnf.v1",
    Task.TEST_DRAFT: "testdraft.v1",
}


class LlmError(Exception):
    """Base for per-request failures the ensemble runner records and survives."""


class ConfigError(Exception):
    pass


class TransportError(LlmError):
    pass


class AuthError(LlmError):
    pass


class MalformedResponseError(LlmError):
    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


class SchemaViolationError(LlmError):
    def __init__(self, message: str):
        super().__init__(message)


class RunInterrupted(Exception):
    """Simulated hard interruption; deliberately not an LlmError so it aborts the run."""


@dataclass(frozen=True)
class MockBehavior:
    script: tuple[str, ...] = ()  # one directive consumed per upstream call
    always: str | None = None  # persistent directive once the script is exhausted
    flip_fnf: tuple[str, ...] = ()  # requirement ids whose FnF label is inverted
    canned: dict = field(default_factory=dict)  # requirement id -> raw response dict
    max_calls: int | None = None  # raise RunInterrupted beyond this many calls


@dataclass(frozen=True)
class LlmProfile:
    rater_id: str
    endpoint_kind: EndpointKind
    model_name: str = ""
    base_url: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 1024
    timeout: float = 30.0
    max_retries: int = 2
    api_key_env_var: str = ""
    mock: MockBehavior | None = None

    def __post_init__(self):
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        # Reproducibility policy: evaluation runs are greedy.
        if self.temperature != 0:
            raise ConfigError(f"profile {self.rater_id!r}: temperature must be 0 for evaluation runs")


def load_profiles(path: str | Path) -> list[LlmProfile]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ConfigError("profiles file must contain a JSON list")
    profiles = []
    for entry in data:
        mock = None
        if "mock" in entry:
            raw = entry["mock"]
            mock = MockBehavior(
                script=tuple(raw.get("script", ())),
                always=raw.get("always"),
                flip_fnf=tuple(raw.get("flip_fnf", ())),
                canned=dict(raw.get("canned", {})),
                max_calls=raw.get("max_calls"),
            )
        profiles.append(LlmProfile(
            rater_id=entry["rater_id"],
            endpoint_kind=EndpointKind(entry["endpoint_kind"]),
            model_name=entry.get("model_name", ""),
            base_url=entry.get("base_url", ""),
            temperature=float(entry.get("temperature", 0.0)),
            max_output_tokens=int(entry.get("max_output_tokens", 1024)),
            timeout=float(entry.get("timeout", 30.0)),
            max_retries=int(entry.get("max_retries", 2)),
            api_key_env_var=entry.get("api_key_env_var", ""),
            mock=mock,
        ))
    seen = [p.rater_id for p in profiles]
    duplicates = sorted({r for r in seen if seen.count(r) > 1})
    if duplicates:
        raise ConfigError(f"duplicate rater_id(s) in profiles: {duplicates}")
    return profiles


# --- prompts ------------------------------------------------------------------

DEFAULT_CRITERIA_DEFS: dict[Criterion, str] = {
    Criterion.ESSENTIAL: "Essential: the requirement states something necessary; removing it would leave a real need unmet.",
    Criterion.INDEPENDENT: "Independent: the requirement expresses the need itself, not how to implement it.",
    Criterion.UNAMBIGUOUS: "Unambiguous: the requirement admits exactly one interpretation.",
    Criterion.COMPLETE: "Complete: the requirement stands on its own, with no unresolved references or placeholders.",
    Criterion.SINGULAR: "Singular: the requirement expresses a single, clear idea.",
    Criterion.FEASIBLE: "Feasible: the requirement can be implemented within known constraints.",
    Criterion.VERIFIABLE: "Verifiable: conformance can be shown by test, demonstration, analysis, or inspection.",
}


@dataclass(frozen=True)
class PromptBundle:
    task: Task
    system_text: str
    user_text: str
    response_schema_id: str


_CRITERIA_SCHEMA_HINT = (
    '{"requirement_id": str, "criteria": {<criterion>: {"verdict": "Pass"|"Fail", '
    '"justification": str}, ... all seven ...}, '
    '"fnf": {"label": "Functional"|"NonFunctional", "subcategory": str|null, "rationale": str}}'
)
_FNF_SCHEMA_HINT = (
    '{"requirement_id": str, "fnf": {"label": "Functional"|"NonFunctional", '
    '"subcategory": str|null, "rationale": str}}'
)
_TESTDRAFT_SCHEMA_HINT = (
    '{"requirement_id": str, "objective": str, "preconditions": [str], '
    '"steps": [str, ...], "expected_result": str, "pass_criteria": str}'
)


def _requirement_block(req: Requirement) -> str:
    return f"Requirement id: {req.id}\nRequirement text:\n<<<\n{req.text}\n>>>"


def build_prompt(
    task: Task,
    req: Requirement,
    criteria_defs: dict[Criterion, str] | None = None,
    taxonomy_config: TaxonomyConfig | None = None,
    extra: dict | None = None,
) -> PromptBundle:
    """Deterministic prompt assembly; the requirement text is embedded verbatim."""
    defs = criteria_defs or DEFAULT_CRITERIA_DEFS
    defs_text = "\n".join(f"{i}. {defs[c]}" for i, c in enumerate(CRITERIA, start=1))
    subcats = ", ".join(s.value for s in Subcategory)

    if task == Task.CRITERIA_ASSESSMENT:
        system_text = (
            "You are a systems engineering reviewer. Judge one requirement statement "
            "against these seven quality criteria:\n"
            f"{defs_text}\n"
            "Also classify the requirement as Functional or NonFunctional; a NonFunctional "
            f"label needs one subcategory from: {subcats}.\n"
            f"Answer ONLY with JSON matching schema criteria.v1: {_CRITERIA_SCHEMA_HINT}. "
            "Give a non-empty justification for every Fail verdict."
        )
        user_text = (
            "Assess the following requirement against all seven criteria and classify it.\n\n"
            f"{_requirement_block(req)}"
        )
    elif task == Task.FNF_CLASSIFICATION:
        system_text = (
            "You are a systems engineering reviewer. Classify one requirement as "
            "Functional (a behavior or capability the system must perform) or "
            "NonFunctional (a quality attribute or constraint). A NonFunctional label "
            f"needs one subcategory from: {subcats}.\n"
            f"Answer ONLY with JSON matching schema fnf.v1: {_FNF_SCHEMA_HINT}."
        )
        user_text = f"Classify the following requirement.\n\n{_requirement_block(req)}"
    elif task == Task.TEST_DRAFT:
        method = (extra or {}).get("method", "Test")
        label = (extra or {}).get("label", "")
        system_text = (
            "You are a verification engineer. Draft a preliminary test specification "
            f"for one requirement, to be verified by {method}. "
            "When the requirement states a measurable threshold, quote it verbatim in pass_criteria.\n"
            f"Answer ONLY with JSON matching schema testdraft.v1: {_TESTDRAFT_SCHEMA_HINT}."
        )
        user_text = (
            f"Draft the test specification (verification method: {method}"
            + (f", classification: {label}" if label else "")
            + f").\n\n{_requirement_block(req)}"
        )
    else:
        raise ValueError(f"unknown task {task!r}")

    return PromptBundle(
        task=task,
        system_text=system_text,
        user_text=user_text,
        response_schema_id=SCHEMA_IDS[task],
    )


# --- payload validation -------------------------------------------------------

@dataclass(frozen=True)
class CriterionOpinion:
    verdict: Verdict
    justification: str


@dataclass(frozen=True)
class FnfOpinion:
    req_class: ReqClass
    rationale: str


@dataclass(frozen=True)
class LlmVerdictPayload:
    requirement_id: str
    per_criterion: dict[Criterion, CriterionOpinion]
    fnf: FnfOpinion | None = None
    retry_count: int = 0


def _parse_fnf(raw: object) -> FnfOpinion:
    if not isinstance(raw, dict):
        raise SchemaViolationError("fnf must be an object")
    try:
        label = ReqKind(raw.get("label"))
    except ValueError:
        raise SchemaViolationError(f"fnf.label {raw.get('label')!r} is not Functional/NonFunctional") from None
    sub_raw = raw.get("subcategory")
    subcategory = None
    if label == ReqKind.NON_FUNCTIONAL:
        try:
            subcategory = Subcategory(sub_raw) if sub_raw else Subcategory.OTHER
        except ValueError:
            raise SchemaViolationError(f"unknown fnf.subcategory {sub_raw!r}") from None
    return FnfOpinion(
        req_class=ReqClass(label, subcategory),
        rationale=str(raw.get("rationale", "")),
    )


def parse_verdict_payload(data: object, task: Task, expected_id: str) -> LlmVerdictPayload:
    """Validate a parsed response into a payload; raises SchemaViolationError."""
    if not isinstance(data, dict):
        raise SchemaViolationError("response is not a JSON object")
    req_id = data.get("requirement_id")
    if req_id != expected_id:
        raise SchemaViolationError(f"requirement_id {req_id!r} does not match the asked item {expected_id!r}")

    per_criterion: dict[Criterion, CriterionOpinion] = {}
    if task == Task.CRITERIA_ASSESSMENT:
        criteria = data.get("criteria")
        if not isinstance(criteria, dict):
            raise SchemaViolationError("missing criteria object")
        missing = [c.value for c in CRITERIA if c.value not in criteria]
        if missing:
            raise SchemaViolationError(f"criteria coverage incomplete, missing: {missing}")
        for criterion in CRITERIA:
            cell = criteria[criterion.value]
            if not isinstance(cell, dict):
                raise SchemaViolationError(f"criteria[{criterion.value}] must be an object")
            verdict_raw = cell.get("verdict")
            if verdict_raw not in (Verdict.PASS.value, Verdict.FAIL.value):
                raise SchemaViolationError(f"criteria[{criterion.value}].verdict must be Pass or Fail")
            verdict = Verdict(verdict_raw)
            justification = str(cell.get("justification", ""))
            if verdict == Verdict.FAIL and not justification.strip():
                raise SchemaViolationError(f"criteria[{criterion.value}]: Fail verdict needs a justification")
            per_criterion[criterion] = CriterionOpinion(verdict, justification)

    fnf = None
    if "fnf" in data and data["fnf"] is not None:
        fnf = _parse_fnf(data["fnf"])
    if task == Task.FNF_CLASSIFICATION and fnf is None:
        raise SchemaViolationError("missing fnf object")
    return LlmVerdictPayload(requirement_id=str(req_id), per_criterion=per_criterion, fnf=fnf)


def extract_json(text: str) -> object:
    """Parse model output as JSON; tolerates surrounding prose or code fences."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        try:
            return json.loads(text[start:end + 1])
        except json.JSONDecodeError:
            pass
    raise MalformedResponseError("response is not parseable JSON", raw_text=text)


# --- transports ---------------------------------------------------------------

_REQ_ID_RE = re.compile(r"^Requirement id: (.+)$", re.MULTILINE)
_REQ_TEXT_RE = re.compile(r"<<<\n(.*?)\n>>>", re.DOTALL)


def _requirement_from_prompt(bundle: PromptBundle) -> Requirement:
    id_match = _REQ_ID_RE.search(bundle.user_text)
    text_match = _REQ_TEXT_RE.search(bundle.user_text)
    if not id_match or not text_match:
        raise TransportError("mock could not locate the requirement in the prompt")
    return Requirement(id=id_match.group(1).strip(), text=text_match.group(1), level=Level.SYSTEM)


def all_pass_response(requirement_id: str, fnf_label: str = "Functional",
                      subcategory: str | None = None, rationale: str = "canned") -> dict:
    """Canned all-Pass response body for mock tables."""
    return {
        "requirement_id": requirement_id,
        "criteria": {c.value: {"verdict": "Pass", "justification": ""} for c in CRITERIA},
        "fnf": {"label": fnf_label, "subcategory": subcategory, "rationale": rationale},
    }


class MockTransport:
    """Deterministic offline endpoint with a timestamped call log."""

    def __init__(self, behavior: MockBehavior | None = None):
        self.behavior = behavior or MockBehavior()
        self.call_log: list[dict] = []
        self.calls = 0
        self._in_flight = 0
        self.peak_in_flight = 0
        self._lock = threading.Lock()
        self._rules = RuleConfig()
        self._taxonomy = TaxonomyConfig()

    def _next_directive(self) -> str:
        if self.calls <= len(self.behavior.script):
            return self.behavior.script[self.calls - 1]
        return self.behavior.always or "valid"

    def _auto_criteria(self, req: Requirement) -> dict:
        findings = analyze_requirement(req, self._rules)
        failed: dict[Criterion, str] = {}
        for f in findings:
            if f.severity == Severity.VIOLATION and f.criterion not in failed:
                failed[f.criterion] = f.message
        criteria = {}
        for criterion in CRITERIA:
            if criterion in failed:
                criteria[criterion.value] = {"verdict": "Fail", "justification": failed[criterion]}
            else:
                criteria[criterion.value] = {"verdict": "Pass", "justification": ""}
        return criteria

    def _auto_fnf(self, req: Requirement) -> dict:
        record = classify_rule_based(req, self._taxonomy, rater_id="mock")
        label = record.req_class.label
        subcategory = record.req_class.subcategory
        rationale = record.rationale
        if req.id in self.behavior.flip_fnf:
            if label == ReqKind.FUNCTIONAL:
                label, subcategory = ReqKind.NON_FUNCTIONAL, Subcategory.OTHER
            else:
                label, subcategory = ReqKind.FUNCTIONAL, None
            rationale = "second opinion differs from the keyword baseline"
        return {
            "label": label.value,
            "subcategory": subcategory.value if subcategory else None,
            "rationale": rationale,
        }

    def _auto_testdraft(self, req: Requirement) -> dict:
        return {
            "requirement_id": req.id,
            "objective": f"Check that the system meets {req.id}",
            "preconditions": ["System deployed in a representative environment"],
            "steps": [f"Exercise the behavior stated in {req.id}", "Record the observed outcome"],
            "expected_result": req.text,
            "pass_criteria": f"Observed behavior matches: {req.text}",
        }

    def complete(self, messages: list[dict], *, bundle: PromptBundle) -> str:
        with self._lock:
            self.calls += 1
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
            call_no = self.calls
        try:
            req = _requirement_from_prompt(bundle)
            with self._lock:
                self.call_log.append({
                    "t": time.monotonic(),
                    "requirement_id": req.id,
                    "call_no": call_no,
                    "task": bundle.task.value,
                })
            if self.behavior.max_calls is not None and call_no > self.behavior.max_calls:
                raise RunInterrupted(f"mock configured to stop after {self.behavior.max_calls} calls")

            directive = self._next_directive()
            if directive == "invalid_json":
                return "{ this is not JSON"
            if directive == "transport_error":
                raise TransportError("mock transport failure")
            if directive == "empty_steps":
                body = self._auto_testdraft(req)
                body["steps"] = []
                return json.dumps(body)

            if req.id in self.behavior.canned:
                return json.dumps(self.behavior.canned[req.id])

            if bundle.task == Task.TEST_DRAFT:
                return json.dumps(self._auto_testdraft(req))
            if bundle.task == Task.FNF_CLASSIFICATION:
                return json.dumps({"requirement_id": req.id, "fnf": self._auto_fnf(req)})

            body = {
                "requirement_id": req.id,
                "criteria": self._auto_criteria(req),
                "fnf": self._auto_fnf(req),
            }
            if directive.startswith("omit_criterion:"):
                body["criteria"].pop(directive.split(":", 1)[1], None)
            return json.dumps(body)
        finally:
            with self._lock:
                self._in_flight -= 1


def _require_key(profile: LlmProfile) -> str:
    if not profile.api_key_env_var:
        raise AuthError(f"profile {profile.rater_id!r} names no api_key_env_var")
    key = os.environ.get(profile.api_key_env_var)
    if not key:
        raise AuthError(f"environment variable {profile.api_key_env_var!r} is not set")
    return key


def build_openai_request(profile: LlmProfile, messages: list[dict], api_key: str) -> tuple[str, dict, dict]:
    url = profile.base_url.rstrip("/") + "/chat/completions"
    headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
    body = {
        "model": profile.model_name,
        "messages": messages,
        "temperature": profile.temperature,
        "max_tokens": profile.max_output_tokens,
    }
    return url, headers, body


def parse_openai_response(data: dict) -> str:
    try:
        return data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"unexpected chat-completions response shape: {exc}") from exc


def build_anthropic_request(profile: LlmProfile, messages: list[dict], api_key: str) -> tuple[str, dict, dict]:
    url = profile.base_url.rstrip("/") + "/messages"
    headers = {
        "x-api-key": api_key,
        "anthropic-version": "2023-06-01",
        "Content-Type": "application/json",
    }
    system = "\n".join(m["content"] for m in messages if m["role"] == "system")
    turns = [m for m in messages if m["role"] != "system"]
    body = {
        "model": profile.model_name,
        "system": system,
        "messages": turns,
        "temperature": profile.temperature,
        "max_tokens": profile.max_output_tokens,
    }
    return url, headers, body


def parse_anthropic_response(data: dict) -> str:
    try:
        return data["content"][0]["text"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"unexpected messages response shape: {exc}") from exc


class HttpTransport:
    def __init__(self, profile: LlmProfile):
        self.profile = profile
        self.api_key = _require_key(profile)
        self._client = httpx.Client(timeout=profile.timeout)

    def complete(self, messages: list[dict], *, bundle: PromptBundle) -> str:
        if self.profile.endpoint_kind == EndpointKind.OPENAI_CHAT:
            url, headers, body = build_openai_request(self.profile, messages, self.api_key)
            parse = parse_openai_response
        else:
            url, headers, body = build_anthropic_request(self.profile, messages, self.api_key)
            parse = parse_anthropic_response
        try:
            response = self._client.post(url, headers=headers, json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthError(f"endpoint rejected the credential ({response.status_code})")
        if response.status_code >= 400:
            raise TransportError(f"endpoint returned HTTP {response.status_code}: {response.text[:200]}")
        return parse(response.json())


def make_transport(profile: LlmProfile):
    if profile.endpoint_kind == EndpointKind.MOCK:
        return MockTransport(profile.mock)
    return HttpTransport(profile)


class RateLimitedTransport:
    """Gates every upstream call (including repair re-asks) through a limiter."""

    def __init__(self, inner, limiter: "RateLimiter"):
        self.inner = inner
        self.limiter = limiter

    def complete(self, messages: list[dict], *, bundle: PromptBundle) -> str:
        self.limiter.acquire()
        return self.inner.complete(messages, bundle=bundle)


# --- structured requests with repair ------------------------------------------

_SCHEMA_HINTS = {
    "criteria.v1": _CRITERIA_SCHEMA_HINT,
    "fnf.v1": _FNF_SCHEMA_HINT,
    "testdraft.v1": _TESTDRAFT_SCHEMA_HINT,
}


def request_structured(
    profile: LlmProfile,
    bundle: PromptBundle,
    validate: Callable[[object], object],
    transport=None,
) -> tuple[object, int]:
    """Send, parse, validate; on failure re-ask with a repair instruction.

    Returns (validated object, retry_count). After max_retries re-asks the
    last failure is raised: MalformedResponseError for unparseable text,
    SchemaViolationError for parseable-but-incomplete output.
    """
    transport = transport or make_transport(profile)
    messages = [
        {"role": "system", "content": bundle.system_text},
        {"role": "user", "content": bundle.user_text},
    ]
    last_error: LlmError | None = None
    for attempt in range(profile.max_retries + 1):
        raw = transport.complete(messages, bundle=bundle)
        try:
            return validate(extract_json(raw)), attempt
        except (MalformedResponseError, SchemaViolationError) as exc:
            last_error = exc
            messages = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": (
                    f"Your previous reply was not acceptable: {exc}. "
                    f"Reply again with ONLY valid JSON matching schema "
                    f"{bundle.response_schema_id}: {_SCHEMA_HINTS[bundle.response_schema_id]}"
                )},
            ]
    assert last_error is not None
    raise last_error


def assess_with_llm(
    profile: LlmProfile,
    req: Requirement,
    *,
    task: Task = Task.CRITERIA_ASSESSMENT,
    criteria_defs: dict[Criterion, str] | None = None,
    transport=None,
) -> LlmVerdictPayload:
    """One structured assessment of one requirement by one rater."""
    bundle = build_prompt(task, req, criteria_defs=criteria_defs)
    payload, retries = request_structured(
        profile, bundle, lambda data: parse_verdict_payload(data, task, req.id), transport
    )
    assert isinstance(payload, LlmVerdictPayload)
    return replace(payload, retry_count=retries)


# --- ensemble runner with journal ---------------------------------------------

@dataclass(frozen=True)
class RateBudget:
    max_concurrent: int = 4
    requests_per_minute: float = 60.0


class RateLimiter:
    def __init__(self, requests_per_minute: float):
        if requests_per_minute <= 0:
            raise ConfigError("requests_per_minute must be positive")
        self.interval = 60.0 / requests_per_minute
        self._lock = threading.Lock()
        self._next_time = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next_time)
            self._next_time = start + self.interval
            wait = start - now
        if wait > 0:
            time.sleep(wait)


def _payload_to_dict(payload: LlmVerdictPayload) -> dict:
    return {
        "requirement_id": payload.requirement_id,
        "criteria": {
            c.value: {"verdict": op.verdict.value, "justification": op.justification}
            for c, op in payload.per_criterion.items()
        },
        "fnf": None if payload.fnf is None else {
            "label": payload.fnf.req_class.label.value,
            "subcategory": payload.fnf.req_class.subcategory.value if payload.fnf.req_class.subcategory else None,
            "rationale": payload.fnf.rationale,
        },
    }


def _payload_from_dict(data: dict, requirement_id: str) -> LlmVerdictPayload:
    per_criterion = {
        Criterion(name): CriterionOpinion(Verdict(cell["verdict"]), cell.get("justification", ""))
        for name, cell in data.get("criteria", {}).items()
    }
    fnf = None
    if data.get("fnf"):
        raw = data["fnf"]
        label = ReqKind(raw["label"])
        subcategory = Subcategory(raw["subcategory"]) if raw.get("subcategory") else None
        fnf = FnfOpinion(ReqClass(label, subcategory), raw.get("rationale", ""))
    return LlmVerdictPayload(requirement_id=requirement_id, per_criterion=per_criterion, fnf=fnf)


class Journal:
    """Append-only JSON-lines record of completed (rater, requirement) work."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def read(self) -> list[dict]:
        if not self.path.exists():
            return []
        entries = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError:
                continue  # torn trailing line from an interrupted run
        return entries

    def append(self, entry: dict) -> None:
        line = json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n"
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def assess_corpus_ensemble(
    profiles: list[LlmProfile],
    req_set: RequirementSet,
    budget: RateBudget,
    journal_path: str | Path,
    *,
    transports: dict[str, object] | None = None,
    criteria_defs: dict[Criterion, str] | None = None,
) -> dict[str, tuple[QualityReport, list[ClassificationRecord]]]:
    """Run every profile over the corpus; journal makes interrupted runs resumable.

    Completed (rater, requirement) pairs are never re-sent. Per-item
    failures become NotAssessable verdicts annotated with the error; only
    non-LLM exceptions (real crashes) abort the run.
    """
    rater_ids = [p.rater_id for p in profiles]
    if not profiles:
        raise ConfigError("at least one profile is required")
    duplicates = sorted({r for r in rater_ids if rater_ids.count(r) > 1})
    if duplicates:
        raise ConfigError(f"duplicate rater_id(s): {duplicates}")

    journal = Journal(journal_path)
    done: set[tuple[str, str]] = set()
    for entry in journal.read():
        if entry.get("status") == "ok":
            done.add((entry["rater_id"], entry["requirement_id"]))

    limiter = RateLimiter(budget.requests_per_minute)
    transport_for: dict[str, object] = {}
    for profile in profiles:
        inner = (transports or {}).get(profile.rater_id) or make_transport(profile)
        transport_for[profile.rater_id] = RateLimitedTransport(inner, limiter)

    pending = [
        (profile, req)
        for profile in profiles
        for req in req_set.requirements
        if (profile.rater_id, req.id) not in done
    ]

    def work(item: tuple[LlmProfile, Requirement]) -> None:
        profile, req = item
        started = time.monotonic()
        try:
            payload = assess_with_llm(
                profile, req, criteria_defs=criteria_defs,
                transport=transport_for[profile.rater_id],
            )
            journal.append({
                "rater_id": profile.rater_id,
                "requirement_id": req.id,
                "status": "ok",
                "payload": _payload_to_dict(payload),
                "retry_count": payload.retry_count,
                "elapsed_ms": round((time.monotonic() - started) * 1000, 3),
                "timestamp": _utc_now(),
            })
        except LlmError as exc:
            journal.append({
                "rater_id": profile.rater_id,
                "requirement_id": req.id,
                "status": "error",
                "error": f"{type(exc).__name__}: {exc}",
                "elapsed_ms": round((time.monotonic() - started) * 1000, 3),
                "timestamp": _utc_now(),
            })

    if pending:
        with ThreadPoolExecutor(max_workers=budget.max_concurrent) as pool:
            futures = [pool.submit(work, item) for item in pending]
            for future in futures:
                future.result()  # re-raise crashes (e.g. RunInterrupted)

    return assemble_ensemble_results(profiles, req_set, journal.read())


def assemble_ensemble_results(
    profiles: list[LlmProfile],
    req_set: RequirementSet,
    entries: list[dict],
) -> dict[str, tuple[QualityReport, list[ClassificationRecord]]]:
    """Build per-rater reports/records from journal entries (ok beats error)."""
    final: dict[tuple[str, str], dict] = {}
    for entry in entries:
        key = (entry["rater_id"], entry["requirement_id"])
        if entry.get("status") == "ok" or key not in final:
            final[key] = entry

    results = {}
    for profile in profiles:
        per_requirement: dict[str, list[Finding]] = {}
        verdicts: dict[tuple[str, Criterion], Verdict] = {}
        records: list[ClassificationRecord] = []
        for req in req_set.requirements:
            entry = final.get((profile.rater_id, req.id))
            findings: list[Finding] = []
            if entry is None or entry.get("status") != "ok":
                error = entry.get("error", "not assessed") if entry else "not assessed"
                findings.append(Finding(
                    requirement_id=req.id,
                    criterion=Criterion.ESSENTIAL,
                    severity=Severity.INFO,
                    rule_id="llm.error",
                    message=f"assessment unavailable: {error}",
                ))
                for criterion in CRITERIA:
                    verdicts[(req.id, criterion)] = Verdict.NOT_ASSESSABLE
            else:
                payload = _payload_from_dict(entry["payload"], req.id)
                for criterion in CRITERIA:
                    opinion = payload.per_criterion[criterion]
                    verdicts[(req.id, criterion)] = opinion.verdict
                    if opinion.verdict == Verdict.FAIL:
                        findings.append(Finding(
                            requirement_id=req.id,
                            criterion=criterion,
                            severity=Severity.VIOLATION,
                            rule_id="llm.criteria_fail",
                            message=opinion.justification,
                        ))
                if payload.fnf is not None:
                    records.append(ClassificationRecord(
                        requirement_id=req.id,
                        rater_id=profile.rater_id,
                        req_class=payload.fnf.req_class,
                        rationale=payload.fnf.rationale or "no rationale given",
                    ))
            per_requirement[req.id] = findings
        report = QualityReport(
            per_requirement=per_requirement,
            criterion_verdicts=verdicts,
            analyzer_provenance=Provenance.LLM_ONLY,
        )
        results[profile.rater_id] = (report, records)
    return results
