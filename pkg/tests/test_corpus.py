from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reqbench.corpus import (
    CorpusError,
    DuplicateIdError,
    EmptyTextError,
    Level,
    ParseError,
    ReqKind,
    Requirement,
    RequirementSet,
    UnknownFormatError,
    load_corpus,
    save_corpus,
    validate_corpus,
)

from conftest import make_req, make_set


def write_json_corpus(path, requirements, name="t"):
    path.write_text(json.dumps({
        "schema_version": 1,
        "name": name,
        "requirements": requirements,
    }), encoding="utf-8")


def test_load_json_preserves_order(tmp_path):
    path = tmp_path / "c.json"
    write_json_corpus(path, [
        {"id": "B", "text": "The system shall beep.", "level": "System"},
        {"id": "A", "text": "The system shall blink.", "level": "Stakeholder"},
    ])
    loaded = load_corpus(path)
    assert len(loaded) == 2
    assert loaded.ids() == ["B", "A"]
    assert loaded.requirements[1].level == Level.STAKEHOLDER


def test_csv_duplicate_id_names_both_rows(tmp_path):
    path = tmp_path / "c.csv"
    rows = ["id,level,text,kind_hint,tags,source"]
    for i, rid in enumerate(["SR-00", "SR-01", "SR-02", "SR-03", "SR-04", "SR-01"]):
        rows.append(f"{rid},System,The system shall do thing {i}.,,,")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    with pytest.raises(DuplicateIdError) as excinfo:
        load_corpus(path)
    # Header is row 1; SR-01 appears on rows 3 and 7.
    assert excinfo.value.requirement_id == "SR-01"
    assert excinfo.value.positions == (3, 7)


def test_bundled_corpus_has_paper_shape(drtool_path):
    corpus = load_corpus(drtool_path)
    levels = [r.level for r in corpus]
    assert levels.count(Level.STAKEHOLDER) == 31
    assert levels.count(Level.SYSTEM) == 76


def test_save_empty_set_round_trips(tmp_path):
    empty = RequirementSet(name="empty")
    for fmt, name in (("Json", "e.json"), ("Csv", "e.csv")):
        path = tmp_path / name
        save_corpus(empty, path, fmt)
        assert path.exists()
        loaded = load_corpus(path)
        assert len(loaded) == 0


def test_csv_round_trip_three_requirements(tmp_path):
    original = make_set(
        Requirement("R-1", "The system shall log events.", Level.SYSTEM, ReqKind.FUNCTIONAL, ("audit",), "spec"),
        Requirement("R-2", "The system shall be available 99 percent of the time.", Level.SYSTEM, ReqKind.NON_FUNCTIONAL),
        Requirement("R-3", "Staff shall be able to search devices.", Level.STAKEHOLDER),
        name="trip",
    )
    path = tmp_path / "trip.csv"
    save_corpus(original, path, "Csv")
    loaded = load_corpus(path)
    assert loaded.requirements == original.requirements


def test_csv_round_trip_quoting_edge_cases(tmp_path):
    tricky = 'The display shall show "room, bed" labels;\nwith a second line.'
    original = make_set(make_req("Q-1", tricky), name="quote")
    path = tmp_path / "q.csv"
    save_corpus(original, path, "Csv")
    loaded = load_corpus(path)
    assert loaded.requirements[0].text == tricky


def test_json_round_trip_identity(tmp_path):
    original = make_set(
        Requirement("J-1", "Text with ünicode.", Level.SYSTEM, None, ("a", "b"), None),
        name="jset",
    )
    path = tmp_path / "j.json"
    save_corpus(original, path, "Json")
    assert load_corpus(path) == original


_id_strategy = st.from_regex(r"[A-Z]{1,3}-[0-9]{1,4}", fullmatch=True)
_text_strategy = (
    st.text(
        alphabet=st.characters(blacklist_categories=("Cs", "Cc"), whitelist_characters='",\n'),
        min_size=1,
        max_size=120,
    )
    .map(lambda s: s.strip())
    .filter(lambda s: s)
)
_tag_strategy = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd")), min_size=1, max_size=10
)
_source_strategy = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd", "Zs")), min_size=1, max_size=15
).filter(lambda s: s.strip() == s and s)


@st.composite
def requirement_sets(draw):
    n = draw(st.integers(min_value=0, max_value=8))
    ids = draw(st.lists(_id_strategy, min_size=n, max_size=n, unique=True))
    reqs = []
    for rid in ids:
        reqs.append(Requirement(
            id=rid,
            text=draw(_text_strategy),
            level=draw(st.sampled_from(list(Level))),
            kind_hint=draw(st.sampled_from([None, ReqKind.FUNCTIONAL, ReqKind.NON_FUNCTIONAL])),
            tags=tuple(draw(st.lists(_tag_strategy, max_size=3))),
            source=draw(st.one_of(st.none(), _source_strategy)),
        ))
    return RequirementSet(name=draw(st.text(max_size=20)), requirements=tuple(reqs))


@given(req_set=requirement_sets(), fmt=st.sampled_from(["Json", "Csv"]))
@settings(max_examples=60, deadline=None)
def test_round_trip_property(req_set, fmt, tmp_path_factory):
    path = tmp_path_factory.mktemp("rt") / ("c.json" if fmt == "Json" else "c.csv")
    save_corpus(req_set, path, fmt)
    loaded = load_corpus(path, fmt)
    assert loaded.requirements == req_set.requirements
    if fmt == "Json":
        assert loaded.name == req_set.name


def test_validate_well_formed_set_is_clean():
    assert validate_corpus(make_set(make_req("A", "The system shall act."))) == []


def test_validate_reports_whitespace_text():
    issues = validate_corpus(make_set(make_req("W", "   \t  ")))
    assert len(issues) == 1
    assert issues[0].kind == "empty_text"
    assert issues[0].requirement_id == "W"


def test_validate_reports_duplicate_positions():
    issues = validate_corpus(make_set(
        make_req("D", "First statement."),
        make_req("X", "Other statement."),
        make_req("D", "Second statement."),
    ))
    dup = [i for i in issues if i.kind == "duplicate_id"]
    assert len(dup) == 1
    assert dup[0].positions == (0, 2)


def test_loader_rejects_empty_text(tmp_path):
    path = tmp_path / "c.json"
    write_json_corpus(path, [{"id": "E", "text": "   ", "level": "System"}])
    with pytest.raises(EmptyTextError):
        load_corpus(path)


def test_loader_trims_text(tmp_path):
    path = tmp_path / "c.json"
    write_json_corpus(path, [{"id": "T", "text": "  padded  ", "level": "System"}])
    assert load_corpus(path).requirements[0].text == "padded"


def test_unknown_extension_rejected(tmp_path):
    path = tmp_path / "c.xml"
    path.write_text("<a/>", encoding="utf-8")
    with pytest.raises(UnknownFormatError):
        load_corpus(path)


def test_strict_json_rejects_unknown_fields(tmp_path):
    path = tmp_path / "c.json"
    write_json_corpus(path, [{"id": "A", "text": "x y z.", "level": "System", "nmae": "typo"}])
    with pytest.raises(ParseError) as excinfo:
        load_corpus(path)
    assert "nmae" in str(excinfo.value)


def test_bad_level_rejected_with_position(tmp_path):
    path = tmp_path / "c.json"
    write_json_corpus(path, [
        {"id": "A", "text": "Fine text.", "level": "System"},
        {"id": "B", "text": "Bad level.", "level": "Subsystem"},
    ])
    with pytest.raises(ParseError) as excinfo:
        load_corpus(path)
    assert "record 2" in str(excinfo.value)


def test_csv_tag_with_semicolon_rejected_on_save(tmp_path):
    bad = make_set(Requirement("S", "Text here.", Level.SYSTEM, tags=("a;b",)))
    with pytest.raises(CorpusError):
        save_corpus(bad, tmp_path / "x.csv", "Csv")
