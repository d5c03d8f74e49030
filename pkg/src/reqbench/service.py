"""HTTP service hosting blind annotation sessions and analysis results.

Sessions are capability tokens: possession grants access, there are no
accounts. Every annotation is appended to a per-session JSON-lines event
log and fsynced before the request is acknowledged, so an acknowledged
label survives a process restart; state is rebuilt by replaying the logs.

Blindness: the serializers for session-scoped endpoints emit only
requirement id and text. While a blind session is open, no endpoint
reachable with its token returns AI verdicts, rule findings, or kind
hints (the agreement view requires the session to be complete).
"""

from __future__ import annotations

import json
import os
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import __version__
from .agreement import (
    AXES,
    AXIS_FNF,
    DegenerateMarginalsError,
    AgreementError,
    axis_categories,
    build_agreement_report,
    load_rater_export,
    matrix_from_exports,
    rater_export_to_dict,
    report_to_dict,
    RaterExport,
)
from .corpus import RequirementSet
from .quality_rules import (
    CRITERIA,
    QualityReport,
    RuleConfig,
    Verdict,
    analyze_corpus,
    finding_to_dict,
)
from .taxonomy import TaxonomyConfig, classify_corpus, record_to_dict

RULES_RATER = "rules-v1"


class ApiError(Exception):
    def __init__(self, status: int, code: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.code = code
        self.detail = detail


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class SessionMeta:
    session_id: str
    corpus_name: str
    annotator_alias: str
    axis_set: tuple[str, ...]
    blind: bool
    created_at: str


class SessionState:
    """In-memory view of one session, rebuilt from its event log."""

    def __init__(self, meta: SessionMeta, corpus: RequirementSet, log_path: Path):
        self.meta = meta
        self.log_path = log_path
        # Item-major cell order: all axes of the first requirement, then the next.
        self.cells: list[tuple[str, str]] = [
            (req.id, axis) for req in corpus.requirements for axis in meta.axis_set
        ]
        self.cell_set = set(self.cells)
        self.effective: dict[tuple[str, str], str] = {}
        self.sequence_no = 0
        self.lock = threading.Lock()

    @property
    def status(self) -> str:
        return "Complete" if len(self.effective) == len(self.cells) else "Open"

    def progress(self) -> dict:
        return {"done": len(self.effective), "total": len(self.cells)}

    def next_cell(self) -> tuple[str, str] | None:
        for cell in self.cells:
            if cell not in self.effective:
                return cell
        return None

    def apply_annotation(self, requirement_id: str, axis: str, label: str) -> None:
        self.sequence_no += 1
        self.effective[(requirement_id, axis)] = label

    def meta_payload(self) -> dict:
        return {
            "session_id": self.meta.session_id,
            "corpus_name": self.meta.corpus_name,
            "annotator_alias": self.meta.annotator_alias,
            "axis_set": list(self.meta.axis_set),
            "blind": self.meta.blind,
            "created_at": self.meta.created_at,
            "status": self.status,
            "progress": self.progress(),
        }


class SessionStore:
    """Per-session append-only event logs under data_dir/sessions."""

    def __init__(self, data_dir: Path, corpora: dict[str, RequirementSet]):
        self.dir = Path(data_dir) / "sessions"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.corpora = corpora
        self.sessions: dict[str, SessionState] = {}
        self._replay_all()

    def _replay_all(self) -> None:
        for log_path in sorted(self.dir.glob("*.jsonl")):
            state = self._replay(log_path)
            if state is not None:
                self.sessions[state.meta.session_id] = state

    def _replay(self, log_path: Path) -> SessionState | None:
        state: SessionState | None = None
        for line in log_path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn trailing line from a crash
            if event.get("kind") == "created":
                corpus = self.corpora.get(event["corpus_name"])
                if corpus is None:
                    return None  # corpus not mounted in this process
                meta = SessionMeta(
                    session_id=event["session_id"],
                    corpus_name=event["corpus_name"],
                    annotator_alias=event["annotator_alias"],
                    axis_set=tuple(event["axis_set"]),
                    blind=bool(event.get("blind", True)),
                    created_at=event["created_at"],
                )
                state = SessionState(meta, corpus, log_path)
            elif event.get("kind") == "annotation" and state is not None:
                state.apply_annotation(event["requirement_id"], event["axis"], event["label"])
        return state

    def _append(self, state_path: Path, event: dict) -> None:
        with state_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def create(self, corpus_name: str, annotator_alias: str, axis_set: list[str]) -> SessionState:
        corpus = self.corpora.get(corpus_name)
        if corpus is None:
            raise ApiError(404, "UnknownCorpus", f"corpus {corpus_name!r} is not loaded on this server")
        normalized = [axis for axis in AXES if axis in set(axis_set)]
        unknown = set(axis_set) - set(AXES)
        if unknown:
            raise ApiError(400, "InvalidAxis", f"unknown axis name(s): {sorted(unknown)}")
        if not normalized:
            raise ApiError(400, "InvalidAxis", "axis_set must name at least one axis")
        meta = SessionMeta(
            session_id=secrets.token_urlsafe(16),
            corpus_name=corpus_name,
            annotator_alias=annotator_alias,
            axis_set=tuple(normalized),
            blind=True,
            created_at=_utc_now(),
        )
        log_path = self.dir / f"{meta.session_id}.jsonl"
        state = SessionState(meta, corpus, log_path)
        self._append(log_path, {
            "kind": "created",
            "session_id": meta.session_id,
            "corpus_name": meta.corpus_name,
            "annotator_alias": meta.annotator_alias,
            "axis_set": list(meta.axis_set),
            "blind": meta.blind,
            "created_at": meta.created_at,
        })
        self.sessions[meta.session_id] = state
        return state

    def get(self, session_id: str) -> SessionState:
        state = self.sessions.get(session_id)
        if state is None:
            raise ApiError(404, "UnknownSession", "no session with this token")
        return state

    def annotate(self, session_id: str, requirement_id: str, axis: str,
                 label: str, note: str | None) -> int:
        state = self.get(session_id)
        with state.lock:
            if state.status == "Complete":
                raise ApiError(409, "SessionClosed", "session is complete; labels can no longer change")
            if (requirement_id, axis) not in state.cell_set:
                raise ApiError(400, "OutOfScope", f"({requirement_id}, {axis}) is not part of this session")
            if label not in axis_categories(axis):
                raise ApiError(
                    400, "InvalidLabel",
                    f"label {label!r} is not in the {axis} category set {list(axis_categories(axis))}",
                )
            sequence_no = state.sequence_no + 1
            self._append(state.log_path, {
                "kind": "annotation",
                "session_id": session_id,
                "requirement_id": requirement_id,
                "axis": axis,
                "label": label,
                "note": note,
                "sequence_no": sequence_no,
                "timestamp": _utc_now(),
            })
            state.apply_annotation(requirement_id, axis, label)
            if state.status == "Complete":
                self._write_snapshot(state)
            return sequence_no

    def _write_snapshot(self, state: SessionState) -> None:
        snapshot = self.dir / f"{state.meta.session_id}.snapshot.json"
        snapshot.write_text(
            json.dumps(export_session_dict(state), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def export_session_dict(state: SessionState) -> dict:
    axes: dict[str, dict[str, str]] = {axis: {} for axis in state.meta.axis_set}
    for (req_id, axis), label in state.effective.items():
        axes[axis][req_id] = label
    payload = rater_export_to_dict(
        rater_id=state.meta.annotator_alias,
        corpus=state.meta.corpus_name,
        axes=axes,
        complete=state.status == "Complete",
    )
    payload["session_id"] = state.meta.session_id
    payload["n_cells"] = len(state.cells)
    return payload


def rules_rater_export(corpus_name: str, corpus: RequirementSet,
                       rule_config: RuleConfig, taxonomy_config: TaxonomyConfig) -> RaterExport:
    """Deterministic rules-v1 labels computed on demand for comparisons."""
    report = analyze_corpus(corpus, rule_config)
    records = classify_corpus(corpus, taxonomy_config)
    axes: dict[str, dict[str, str]] = {AXIS_FNF: {}}
    for record in records:
        axes[AXIS_FNF][record.requirement_id] = record.req_class.label.value
    for criterion in CRITERIA:
        labels = {}
        for req in corpus.requirements:
            verdict = report.criterion_verdicts[(req.id, criterion)]
            if verdict != Verdict.NOT_ASSESSABLE:
                labels[req.id] = verdict.value
        if labels:
            axes[criterion.value] = labels
    return RaterExport(rater_id=RULES_RATER, corpus=corpus_name, complete=True, axes=axes, rationales={})


def stable_json_response(payload: dict, status_code: int = 200) -> Response:
    """Exactly the serialization the CLI uses, so numbers match byte-for-byte."""
    return Response(
        content=json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        status_code=status_code,
        media_type="application/json",
    )


class CreateSessionBody(BaseModel):
    corpus_name: str
    annotator_alias: str
    axis_set: list[str] = [AXIS_FNF]


class AnnotationBody(BaseModel):
    requirement_id: str
    axis: str
    label: str
    note: str | None = None


def create_app(
    data_dir: str | Path,
    corpora: dict[str, RequirementSet],
    ui_dir: str | Path | None = None,
    rule_config: RuleConfig | None = None,
    taxonomy_config: TaxonomyConfig | None = None,
) -> FastAPI:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    rule_config = rule_config or RuleConfig()
    taxonomy_config = taxonomy_config or TaxonomyConfig()
    store = SessionStore(data_dir, corpora)
    admin_cache: dict[str, tuple[QualityReport, list]] = {}

    app = FastAPI(title="reqbench annotation service", version=__version__)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.code, "detail": exc.detail})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.get("/corpora")
    def list_corpora():
        out = []
        for name in sorted(corpora):
            corpus = corpora[name]
            levels = [r.level.value for r in corpus.requirements]
            out.append({
                "name": name,
                "n_requirements": len(corpus),
                "n_stakeholder": levels.count("Stakeholder"),
                "n_system": levels.count("System"),
            })
        return {"corpora": out}

    @app.get("/corpora/{name}/requirements")
    def corpus_requirements(name: str):
        # Non-blind admin view: hints, rule findings, and classifications included.
        corpus = corpora.get(name)
        if corpus is None:
            raise ApiError(404, "UnknownCorpus", f"corpus {name!r} is not loaded on this server")
        if name not in admin_cache:
            admin_cache[name] = (
                analyze_corpus(corpus, rule_config),
                classify_corpus(corpus, taxonomy_config),
            )
        report, records = admin_cache[name]
        by_id = {r.requirement_id: r for r in records}
        items = []
        for req in corpus.requirements:
            items.append({
                "id": req.id,
                "text": req.text,
                "level": req.level.value,
                "kind_hint": req.kind_hint.value if req.kind_hint else None,
                "tags": list(req.tags),
                "source": req.source,
                "findings": [finding_to_dict(f) for f in report.per_requirement[req.id]],
                "classification": record_to_dict(by_id[req.id]),
            })
        return {"name": name, "requirements": items}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        state = store.create(body.corpus_name, body.annotator_alias, body.axis_set)
        return state.meta_payload()

    @app.get("/sessions/{session_id}")
    def session_meta(session_id: str):
        return store.get(session_id).meta_payload()

    @app.get("/sessions/{session_id}/next")
    def fetch_next(session_id: str):
        state = store.get(session_id)
        with state.lock:
            cell = state.next_cell()
            progress = state.progress()
        if cell is None:
            return {"done": True, "progress": progress}
        req_id, axis = cell
        corpus = corpora[state.meta.corpus_name]
        req = corpus.by_id(req_id)
        # Blindness: id and text only, nothing else about the requirement.
        return {
            "requirement": {"id": req.id, "text": req.text},
            "axis": axis,
            "labels": list(axis_categories(axis)),
            "progress": progress,
        }

    @app.post("/sessions/{session_id}/annotations")
    def submit_annotation(session_id: str, body: AnnotationBody):
        sequence_no = store.annotate(session_id, body.requirement_id, body.axis, body.label, body.note)
        state = store.get(session_id)
        return {"sequence_no": sequence_no, "status": state.status, "progress": state.progress()}

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str):
        return stable_json_response(export_session_dict(store.get(session_id)))

    def _resolve_versus(corpus_name: str, versus: str) -> RaterExport:
        rater_file = data_dir / "raters" / corpus_name / f"{versus}.json"
        if rater_file.exists():
            return load_rater_export(rater_file)
        if versus == RULES_RATER:
            return rules_rater_export(corpus_name, corpora[corpus_name], rule_config, taxonomy_config)
        raise ApiError(404, "UnknownRater", f"no stored labels for rater {versus!r} on corpus {corpus_name!r}")

    @app.get("/sessions/{session_id}/agreement")
    def session_agreement(session_id: str, versus: str = RULES_RATER):
        state = store.get(session_id)
        if state.status != "Complete":
            raise ApiError(409, "SessionNotComplete", "complete all items before requesting agreement")
        session_export_dict = export_session_dict(state)
        session_export = RaterExport(
            rater_id=session_export_dict["rater_id"],
            corpus=state.meta.corpus_name,
            complete=True,
            axes={axis: dict(body["labels"]) for axis, body in session_export_dict["axes"].items()},
            rationales={},
        )
        other = _resolve_versus(state.meta.corpus_name, versus)
        axes_payload: dict[str, dict] = {}
        for axis in state.meta.axis_set:
            if axis not in other.axes:
                axes_payload[axis] = {"error": "NoLabels", "detail": f"{versus} has no labels for this axis"}
                continue
            try:
                matrix, n_excluded, _ = matrix_from_exports(session_export, other, axis)
                report = build_agreement_report(matrix, axis, n_excluded)
                axes_payload[axis] = report_to_dict(report)
            except DegenerateMarginalsError:
                axes_payload[axis] = {
                    "error": "DegenerateMarginals",
                    "detail": "all labels fall in one category; kappa is undefined",
                }
            except AgreementError as exc:
                axes_payload[axis] = {"error": "NoOverlap", "detail": str(exc)}
        return stable_json_response({
            "session_id": session_id,
            "versus": versus,
            "axes": axes_payload,
        })

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def placeholder():
            return (
                "<!doctype html><title>reqbench</title>"
                "<h1>reqbench annotation service</h1>"
                "<p>No UI bundle configured. The REST API is live; see /healthz.</p>"
            )

    return app
