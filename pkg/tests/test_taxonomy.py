from __future__ import annotations

import json

import pytest

from reqbench.corpus import ReqKind
from reqbench.taxonomy import (
    ClassificationRecord,
    ReqClass,
    Subcategory,
    TaxonomyConfig,
    UnknownRequirementError,
    classify_corpus,
    classify_rule_based,
    record_from_dict,
    records_from_jsonl,
    records_to_jsonl,
    score_against_hints,
)

from conftest import make_req, make_set


def test_security_keyword_wins():
    record = classify_rule_based(make_req("T-1", "The system shall encrypt all stored records."))
    assert record.req_class == ReqClass(ReqKind.NON_FUNCTIONAL, Subcategory.SECURITY)
    assert "encrypt" in record.rationale


def test_functional_by_default():
    record = classify_rule_based(make_req("T-2", "The system shall send an alert when equipment leaves the room."))
    assert record.req_class == ReqClass(ReqKind.FUNCTIONAL)
    assert record.rationale == "no NFR keyword matched; functional by default"


def test_reliability_keyword():
    record = classify_rule_based(make_req("T-3", "The system shall be available 99.9% of the time."))
    assert record.req_class == ReqClass(ReqKind.NON_FUNCTIONAL, Subcategory.RELIABILITY)
    assert "available" in record.rationale


def test_priority_order_resolves_multi_match():
    # "encrypt" (Security) and "within" (Performance) both match; Security is earlier.
    record = classify_rule_based(make_req("T-4", "The system shall encrypt backups within 5 minutes."))
    assert record.req_class.subcategory == Subcategory.SECURITY


def test_classify_corpus_order_and_rater_id():
    corpus = make_set(
        make_req("A", "The system shall page staff."),
        make_req("B", "The system shall require authentication."),
    )
    records = classify_corpus(corpus)
    assert [r.requirement_id for r in records] == ["A", "B"]
    assert all(r.rater_id == "rules-v1" for r in records)
    assert records == classify_corpus(corpus)


def test_classify_corpus_empty():
    assert classify_corpus(make_set()) == []


def test_subcategory_discipline_enforced():
    with pytest.raises(ValueError):
        ReqClass(ReqKind.NON_FUNCTIONAL, None)
    with pytest.raises(ValueError):
        ReqClass(ReqKind.FUNCTIONAL, Subcategory.OTHER)


def test_score_against_hints_counts():
    corpus = make_set(
        make_req("S-1", "a b.", kind_hint=ReqKind.FUNCTIONAL),
        make_req("S-2", "c d.", kind_hint=ReqKind.FUNCTIONAL),
        make_req("S-3", "e f.", kind_hint=ReqKind.NON_FUNCTIONAL),
        make_req("S-4", "g h.", kind_hint=ReqKind.NON_FUNCTIONAL),
        make_req("S-5", "i j."),  # no hint: not scored
    )
    records = [
        ClassificationRecord("S-1", "x", ReqClass(ReqKind.FUNCTIONAL), "r"),
        ClassificationRecord("S-2", "x", ReqClass(ReqKind.FUNCTIONAL), "r"),
        ClassificationRecord("S-3", "x", ReqClass(ReqKind.NON_FUNCTIONAL, Subcategory.OTHER), "r"),
        ClassificationRecord("S-4", "x", ReqClass(ReqKind.FUNCTIONAL), "r"),  # wrong
        ClassificationRecord("S-5", "x", ReqClass(ReqKind.FUNCTIONAL), "r"),
    ]
    accuracy = score_against_hints(records, corpus)
    assert accuracy.n_scored == 4
    assert accuracy.n_correct == 3
    assert accuracy.accuracy == pytest.approx(0.75)


def test_score_all_match():
    corpus = make_set(make_req("S-1", "a.", kind_hint=ReqKind.FUNCTIONAL))
    records = [ClassificationRecord("S-1", "x", ReqClass(ReqKind.FUNCTIONAL), "r")]
    assert score_against_hints(records, corpus).accuracy == 1.0


def test_score_without_hints_reports_absent():
    corpus = make_set(make_req("S-1", "a."))
    records = [ClassificationRecord("S-1", "x", ReqClass(ReqKind.FUNCTIONAL), "r")]
    accuracy = score_against_hints(records, corpus)
    assert accuracy.n_scored == 0
    assert accuracy.accuracy is None


def test_score_unknown_requirement_rejected():
    corpus = make_set(make_req("S-1", "a."))
    records = [ClassificationRecord("GHOST", "x", ReqClass(ReqKind.FUNCTIONAL), "r")]
    with pytest.raises(UnknownRequirementError):
        score_against_hints(records, corpus)


def test_records_jsonl_round_trip():
    records = [
        ClassificationRecord("R-1", "rules-v1", ReqClass(ReqKind.FUNCTIONAL), "default", None),
        ClassificationRecord("R-2", "rules-v1", ReqClass(ReqKind.NON_FUNCTIONAL, Subcategory.SECURITY), "encrypt", 0.9),
    ]
    text = records_to_jsonl(records)
    assert len(text.splitlines()) == 2
    assert records_from_jsonl(text) == records


def test_taxonomy_config_file_round_trip(tmp_path):
    config = TaxonomyConfig()
    path = tmp_path / "tax.json"
    path.write_text(json.dumps(config.to_list()), encoding="utf-8")
    loaded = TaxonomyConfig.from_file(path)
    assert loaded.tables == config.tables


def test_rationale_names_all_matched_keywords():
    record = classify_rule_based(make_req("T-5", "Authentication and password rules shall be enforced."))
    assert record.req_class.subcategory == Subcategory.SECURITY
    assert "authentication" in record.rationale and "password" in record.rationale


def test_machine_record_rationale_nonempty(drtool_path):
    from reqbench.corpus import load_corpus

    for record in classify_corpus(load_corpus(drtool_path)):
        assert record.rationale
        label = record.req_class.label
        assert (record.req_class.subcategory is not None) == (label == ReqKind.NON_FUNCTIONAL)
