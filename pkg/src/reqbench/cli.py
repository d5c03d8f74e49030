"""Command-line entry point tying the pipeline together.

Subcommands: analyze, assess, compare, gen-tests, refine-hints, serve.
Every command that writes outputs also writes a run manifest next to
them (inputs, config hashes, timing, status), so a run can be replayed
or audited later. Plain-text tables go to stdout; JSON goes to files.

Exit codes: 0 success; 1 violations found under --fail-on-violation;
2 input/config errors; 3 assess completed with per-item failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .agreement import (
    AXES,
    AXIS_FNF,
    AgreementError,
    DegenerateMarginalsError,
    build_agreement_report,
    case_from_dict,
    load_rater_export,
    matrix_from_exports,
    rater_export_to_dict,
    refinement_hints,
    render_report_text,
    report_to_dict,
)
from .corpus import CorpusError, load_corpus
from .llm_bridge import (
    ConfigError,
    Journal,
    RateBudget,
    RunInterrupted,
    assess_corpus_ensemble,
    load_profiles,
)
from .quality_rules import (
    CRITERIA,
    QualityReport,
    RuleConfig,
    Severity,
    Verdict,
    analyze_corpus,
    report_from_dict,
    report_to_json,
)
from .taxonomy import (
    TaxonomyConfig,
    classify_corpus,
    records_from_jsonl,
    records_to_jsonl,
)
from .testgen import generate_suite, render_suite_text, suite_to_json


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


class ManifestWriter:
    """Collects run metadata; always lands in out_dir/manifest.json."""

    def __init__(self, command: str, out_dir: Path):
        self.command = command
        self.out_dir = out_dir
        self.started_at = _utc_now()
        self.inputs: dict[str, str] = {}
        self.config_hashes: dict[str, str] = {}
        self.outputs: list[str] = []

    def add_input(self, name: str, path: Path | None) -> None:
        if path is not None:
            self.inputs[name] = str(path)

    def add_config(self, name: str, path: Path | None, default_text: str) -> None:
        self.config_hashes[name] = _sha256_file(path) if path else _sha256_text(default_text)

    def add_output(self, path: Path) -> None:
        self.outputs.append(str(path))

    def write(self, status: str, error: str | None = None) -> None:
        payload = {
            "command": self.command,
            "tool_version": __version__,
            "started_at": self.started_at,
            "finished_at": _utc_now(),
            "inputs": self.inputs,
            "config_hashes": self.config_hashes,
            "outputs": sorted(self.outputs),
            "status": status,
        }
        if error:
            payload["error"] = error
        self.out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(self.out_dir / "manifest.json", payload)


def _load_rule_config(path: str | None) -> RuleConfig:
    return RuleConfig.from_file(path) if path else RuleConfig()


def _load_taxonomy_config(path: str | None) -> TaxonomyConfig:
    return TaxonomyConfig.from_file(path) if path else TaxonomyConfig()


def _rules_export_dict(corpus_name: str, report: QualityReport, records) -> dict:
    """Rater-export view of one rater's analysis outputs."""
    axes: dict[str, dict[str, str]] = {AXIS_FNF: {}}
    rationales: dict[str, dict[str, str]] = {AXIS_FNF: {}}
    rater_id = records[0].rater_id if records else "rules-v1"
    for record in records:
        axes[AXIS_FNF][record.requirement_id] = record.req_class.label.value
        rationales[AXIS_FNF][record.requirement_id] = record.rationale
    for criterion in CRITERIA:
        labels = {}
        for (req_id, c), verdict in report.criterion_verdicts.items():
            if c == criterion and verdict != Verdict.NOT_ASSESSABLE:
                labels[req_id] = verdict.value
        if labels:
            axes[criterion.value] = labels
    return rater_export_to_dict(rater_id, corpus_name, axes, complete=True, rationales=rationales)


# --- commands -------------------------------------------------------------------

def cmd_analyze(args) -> int:
    out_dir = Path(args.out)
    manifest = ManifestWriter("analyze", out_dir)
    manifest.add_input("input", Path(args.input))
    rule_config = _load_rule_config(args.rules_config)
    taxonomy_config = _load_taxonomy_config(args.taxonomy_config)
    manifest.add_config("rules", Path(args.rules_config) if args.rules_config else None,
                        json.dumps(RuleConfig().to_dict(), sort_keys=True))
    manifest.add_config("taxonomy", Path(args.taxonomy_config) if args.taxonomy_config else None,
                        json.dumps(TaxonomyConfig().to_list(), sort_keys=True))
    try:
        corpus = load_corpus(args.input)
        report = analyze_corpus(corpus, rule_config)
        records = classify_corpus(corpus, taxonomy_config)

        out_dir.mkdir(parents=True, exist_ok=True)
        report_path = out_dir / "quality_report.json"
        report_path.write_text(report_to_json(report), encoding="utf-8")
        manifest.add_output(report_path)

        records_path = out_dir / "classifications.jsonl"
        records_path.write_text(records_to_jsonl(records), encoding="utf-8")
        manifest.add_output(records_path)

        export_path = out_dir / "rules-v1.export.json"
        _write_json(export_path, _rules_export_dict(corpus.name, report, records))
        manifest.add_output(export_path)
    except (CorpusError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.write("failed", error=str(exc))
        return 2

    n_violations = sum(
        1 for findings in report.per_requirement.values()
        for f in findings if f.severity == Severity.VIOLATION
    )
    n_warnings = sum(
        1 for findings in report.per_requirement.values()
        for f in findings if f.severity == Severity.WARNING
    )
    manifest.write("ok")
    print(f"analyzed {len(corpus)} requirements: {n_violations} violations, {n_warnings} warnings")
    if args.fail_on_violation and n_violations:
        return 1
    return 0


def cmd_assess(args) -> int:
    out_dir = Path(args.out)
    manifest = ManifestWriter("assess", out_dir)
    manifest.add_input("input", Path(args.input))
    manifest.add_input("profiles", Path(args.profiles))
    try:
        corpus = load_corpus(args.input)
        profiles = load_profiles(args.profiles)
        manifest.add_config("profiles", Path(args.profiles), "")
        out_dir.mkdir(parents=True, exist_ok=True)
        journal_path = out_dir / "journal.jsonl"
        if not args.resume and journal_path.exists():
            journal_path.unlink()
        budget = RateBudget(max_concurrent=args.max_concurrent, requests_per_minute=args.rpm)
        results = assess_corpus_ensemble(profiles, corpus, budget, journal_path)
        manifest.add_output(journal_path)
    except (CorpusError, ConfigError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.write("failed", error=str(exc))
        return 2
    except RunInterrupted as exc:
        print(f"interrupted: {exc}", file=sys.stderr)
        manifest.write("failed", error=str(exc))
        return 2

    item_errors: list[str] = []
    for entry in Journal(journal_path).read():
        if entry.get("status") == "error":
            key = (entry["rater_id"], entry["requirement_id"])
            item_errors.append(f"{key[0]}/{key[1]}: {entry.get('error', 'unknown')}")

    for rater_id, (report, records) in sorted(results.items()):
        report_path = out_dir / f"{rater_id}.report.json"
        report_path.write_text(report_to_json(report), encoding="utf-8")
        manifest.add_output(report_path)
        records_path = out_dir / f"{rater_id}.classifications.jsonl"
        records_path.write_text(records_to_jsonl(records), encoding="utf-8")
        manifest.add_output(records_path)
        export_path = out_dir / f"{rater_id}.export.json"
        _write_json(export_path, _rules_export_dict(corpus.name, report, records))
        manifest.add_output(export_path)
        print(f"{rater_id}: {len(records)} classifications, "
              f"{sum(len(f) for f in report.per_requirement.values())} findings")

    if item_errors:
        manifest.write("partial", error=f"{len(item_errors)} item(s) failed")
        print(f"{len(item_errors)} item(s) failed:", file=sys.stderr)
        for line in sorted(item_errors):
            print(f"  {line}", file=sys.stderr)
        return 3
    manifest.write("ok")
    return 0


def cmd_compare(args) -> int:
    out_dir = Path(args.out)
    manifest = ManifestWriter("compare", out_dir)
    manifest.add_input("a", Path(args.a))
    manifest.add_input("b", Path(args.b))
    try:
        export_a = load_rater_export(args.a)
        export_b = load_rater_export(args.b)
        matrix, n_excluded, rationales = matrix_from_exports(export_a, export_b, args.axis)
        report = build_agreement_report(matrix, args.axis, n_excluded, rationales)
    except DegenerateMarginalsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.write("failed", error=str(exc))
        return 2
    except (AgreementError, OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.write("failed", error=str(exc))
        return 2

    if n_excluded:
        print(f"note: {n_excluded} item(s) excluded listwise (not labeled by both raters)")
    print(render_report_text(report), end="")
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "agreement.json"
    _write_json(report_path, report_to_dict(report))
    manifest.add_output(report_path)
    manifest.write("ok")
    return 0


def cmd_gen_tests(args) -> int:
    out_dir = Path(args.out)
    manifest = ManifestWriter("gen-tests", out_dir)
    manifest.add_input("input", Path(args.input))
    manifest.add_input("analysis", Path(args.analysis))
    manifest.add_input("classes", Path(args.classes))
    try:
        corpus = load_corpus(args.input)
        report = report_from_dict(json.loads(Path(args.analysis).read_text(encoding="utf-8")))
        records = records_from_jsonl(Path(args.classes).read_text(encoding="utf-8"))
        profile = None
        if args.mode == "LlmWithFallback":
            if not args.profiles:
                raise ConfigError("LlmWithFallback mode requires --profiles")
            profiles = load_profiles(args.profiles)
            manifest.add_input("profiles", Path(args.profiles))
            profile = profiles[0]
        specs, blocked = generate_suite(corpus, report, records, mode=args.mode, profile=profile)
    except (CorpusError, ConfigError, OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.write("failed", error=str(exc))
        return 2

    out_dir.mkdir(parents=True, exist_ok=True)
    suite_path = out_dir / "test_specs.json"
    suite_path.write_text(suite_to_json(specs, blocked), encoding="utf-8")
    manifest.add_output(suite_path)
    text_path = out_dir / "test_specs.txt"
    text_path.write_text(render_suite_text(specs, blocked), encoding="utf-8")
    manifest.add_output(text_path)
    manifest.write("ok")
    print(f"generated {len(specs)} spec(s), {len(blocked)} blocked")
    return 0


def cmd_refine_hints(args) -> int:
    out_dir = Path(args.out)
    manifest = ManifestWriter("refine-hints", out_dir)
    manifest.add_input("cases", Path(args.cases))
    rule_config = _load_rule_config(args.rules_config)
    taxonomy_config = _load_taxonomy_config(args.taxonomy_config)
    manifest.add_config("rules", Path(args.rules_config) if args.rules_config else None,
                        json.dumps(RuleConfig().to_dict(), sort_keys=True))
    try:
        raw_cases = json.loads(Path(args.cases).read_text(encoding="utf-8"))
        cases = [case_from_dict(c) for c in raw_cases]
        hints = refinement_hints(cases, rule_config, taxonomy_config)
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.write("failed", error=str(exc))
        return 2

    out_dir.mkdir(parents=True, exist_ok=True)
    hints_path = out_dir / "hints.json"
    _write_json(hints_path, {"hints": [
        {
            "kind": h.kind.value,
            "payload": h.payload,
            "supporting_case_ids": list(h.supporting_case_ids),
        }
        for h in hints
    ]})
    manifest.add_output(hints_path)
    manifest.write("ok")
    print(f"{len(hints)} hint(s) written")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    corpora = {}
    try:
        for spec in args.corpus or []:
            if "=" in spec:
                name, path = spec.split("=", 1)
            else:
                name, path = Path(spec).stem, spec
            corpora[name] = load_corpus(path)
        rule_config = _load_rule_config(args.rules_config)
        taxonomy_config = _load_taxonomy_config(args.taxonomy_config)
    except (CorpusError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    app = create_app(
        args.data_dir,
        corpora,
        ui_dir=args.ui_dir,
        rule_config=rule_config,
        taxonomy_config=taxonomy_config,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reqbench",
        description="requirements quality workbench: lint, classify, assess, compare, generate tests",
    )
    parser.add_argument("--version", action="version", version=f"reqbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run rule analyzers and the keyword classifier")
    p.add_argument("--input", required=True, help="corpus file (.json or .csv)")
    p.add_argument("--rules-config", help="RuleConfig JSON (defaults built in)")
    p.add_argument("--taxonomy-config", help="TaxonomyConfig JSON (defaults built in)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fail-on-violation", action="store_true",
                   help="exit 1 when any Violation finding exists")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("assess", help="run the LLM ensemble over a corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--profiles", required=True, help="JSON list of rater profiles")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true", help="reuse the journal in the output directory")
    p.add_argument("--max-concurrent", type=int, default=4)
    p.add_argument("--rpm", type=float, default=60.0, help="requests per minute budget")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("compare", help="agreement statistics between two rater exports")
    p.add_argument("--a", required=True, help="first rater export JSON")
    p.add_argument("--b", required=True, help="second rater export JSON")
    p.add_argument("--axis", default=AXIS_FNF, choices=list(AXES))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-tests", help="generate preliminary test specifications")
    p.add_argument("--input", required=True)
    p.add_argument("--analysis", required=True, help="quality_report.json from analyze/assess")
    p.add_argument("--classes", required=True, help="classifications.jsonl")
    p.add_argument("--mode", default="TemplateOnly", choices=["TemplateOnly", "LlmWithFallback"])
    p.add_argument("--profiles", help="profiles JSON (first profile drafts in LlmWithFallback mode)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_tests)

    p = sub.add_parser("refine-hints", help="mine refinement hints from disagreement cases")
    p.add_argument("--cases", required=True, help="JSON list of disagreement cases")
    p.add_argument("--rules-config")
    p.add_argument("--taxonomy-config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine_hints)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--corpus", action="append", metavar="NAME=PATH",
                   help="corpus to mount (repeatable); bare PATH uses the file stem as name")
    p.add_argument("--ui-dir", help="static annotation UI bundle to serve at /")
    p.add_argument("--rules-config")
    p.add_argument("--taxonomy-config")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
