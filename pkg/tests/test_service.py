from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from reqbench.corpus import Level, Requirement, RequirementSet
from reqbench.service import create_app

from conftest import make_req, make_set


CORPUS = make_set(
    make_req("R-1", "The system shall encrypt stored records."),
    make_req("R-2", "The system shall page the on-call engineer."),
    name="svc",
)

HINTED = RequirementSet(name="hinted", requirements=(
    Requirement("H-1", "The system shall encrypt archives.", Level.SYSTEM, None, ("x",), None),
))


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "data", {"svc": CORPUS})
    with TestClient(app) as c:
        yield c


def create_session(client, axes=("FnF",), alias="expert-a", corpus="svc"):
    response = client.post("/sessions", json={
        "corpus_name": corpus,
        "annotator_alias": alias,
        "axis_set": list(axes),
    })
    assert response.status_code == 201, response.text
    return response.json()


def test_healthz(client):
    body = client.get("/healthz").json()
    assert body["status"] == "ok"


def test_create_session_returns_token(client):
    body = create_session(client)
    assert body["session_id"]
    assert body["status"] == "Open"
    assert body["axis_set"] == ["FnF"]


def test_unknown_corpus_404(client):
    response = client.post("/sessions", json={
        "corpus_name": "ghost", "annotator_alias": "x", "axis_set": ["FnF"],
    })
    assert response.status_code == 404
    assert response.json()["error"] == "UnknownCorpus"


def test_two_sessions_have_independent_progress(client):
    first = create_session(client)
    second = create_session(client)
    assert first["session_id"] != second["session_id"]
    sid = first["session_id"]
    client.post(f"/sessions/{sid}/annotations", json={
        "requirement_id": "R-1", "axis": "FnF", "label": "NonFunctional",
    })
    assert client.get(f"/sessions/{sid}/next").json()["progress"]["done"] == 1
    assert client.get(f"/sessions/{second['session_id']}/next").json()["progress"]["done"] == 0


def test_fetch_next_walks_corpus_order_and_completes(client):
    sid = create_session(client)["session_id"]
    first = client.get(f"/sessions/{sid}/next").json()
    assert first["requirement"] == {"id": "R-1", "text": "The system shall encrypt stored records."}
    assert first["axis"] == "FnF"
    assert first["progress"] == {"done": 0, "total": 2}

    for req_id, label in (("R-1", "NonFunctional"), ("R-2", "Functional")):
        response = client.post(f"/sessions/{sid}/annotations", json={
            "requirement_id": req_id, "axis": "FnF", "label": label,
        })
        assert response.status_code == 200

    done = client.get(f"/sessions/{sid}/next").json()
    assert done == {"done": True, "progress": {"done": 2, "total": 2}}
    assert client.get(f"/sessions/{sid}").json()["status"] == "Complete"


def test_axis_order_is_fnf_then_criteria(client):
    body = create_session(client, axes=("Verifiable", "FnF", "Unambiguous"))
    assert body["axis_set"] == ["FnF", "Unambiguous", "Verifiable"]
    sid = body["session_id"]
    first = client.get(f"/sessions/{sid}/next").json()
    assert first["axis"] == "FnF"
    assert first["labels"] == ["Functional", "NonFunctional"]


def test_blind_session_responses_carry_no_ai_fields(client):
    sid = create_session(client, axes=("FnF", "Unambiguous"))["session_id"]
    endpoints = [
        ("GET", f"/sessions/{sid}"),
        ("GET", f"/sessions/{sid}/next"),
        ("GET", f"/sessions/{sid}/export"),
        ("GET", f"/sessions/{sid}/agreement"),
    ]
    leak_markers = ("kind_hint", "finding", "verdict", "rationale", "classification")
    for method, url in endpoints:
        response = client.request(method, url)
        lowered = response.text.lower()
        for marker in leak_markers:
            assert marker not in lowered, f"{url} leaked {marker!r}"
    submit = client.post(f"/sessions/{sid}/annotations", json={
        "requirement_id": "R-1", "axis": "FnF", "label": "Functional",
    })
    for marker in leak_markers:
        assert marker not in submit.text.lower()


def test_invalid_label_rejected(client):
    sid = create_session(client)["session_id"]
    response = client.post(f"/sessions/{sid}/annotations", json={
        "requirement_id": "R-1", "axis": "FnF", "label": "Maybe",
    })
    assert response.status_code == 400
    assert response.json()["error"] == "InvalidLabel"


def test_out_of_scope_cell_rejected(client):
    sid = create_session(client)["session_id"]
    response = client.post(f"/sessions/{sid}/annotations", json={
        "requirement_id": "R-1", "axis": "Unambiguous", "label": "Pass",
    })
    assert response.status_code == 400
    assert response.json()["error"] == "OutOfScope"


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/next").status_code == 404


def test_resubmission_supersedes_but_log_keeps_both(tmp_path):
    app = create_app(tmp_path / "data", {"svc": CORPUS})
    with TestClient(app) as client:
        sid = create_session(client)["session_id"]
        first = client.post(f"/sessions/{sid}/annotations", json={
            "requirement_id": "R-1", "axis": "FnF", "label": "Functional",
        }).json()
        second = client.post(f"/sessions/{sid}/annotations", json={
            "requirement_id": "R-1", "axis": "FnF", "label": "NonFunctional",
        }).json()
        assert (first["sequence_no"], second["sequence_no"]) == (1, 2)
        export = client.get(f"/sessions/{sid}/export").json()
        assert export["axes"]["FnF"]["labels"]["R-1"] == "NonFunctional"

    log = (tmp_path / "data" / "sessions" / f"{sid}.jsonl").read_text()
    events = [json.loads(line) for line in log.splitlines()]
    annotations = [e for e in events if e["kind"] == "annotation"]
    assert [a["label"] for a in annotations] == ["Functional", "NonFunctional"]


def test_acknowledged_annotations_survive_restart(tmp_path):
    data_dir = tmp_path / "data"
    app = create_app(data_dir, {"svc": CORPUS})
    with TestClient(app) as client:
        sid = create_session(client)["session_id"]
        client.post(f"/sessions/{sid}/annotations", json={
            "requirement_id": "R-1", "axis": "FnF", "label": "NonFunctional",
        })

    reborn = create_app(data_dir, {"svc": CORPUS})
    with TestClient(reborn) as client:
        body = client.get(f"/sessions/{sid}").json()
        assert body["progress"] == {"done": 1, "total": 2}
        export = client.get(f"/sessions/{sid}/export").json()
        assert export["axes"]["FnF"]["labels"] == {"R-1": "NonFunctional"}


def test_incomplete_session_agreement_409(client):
    sid = create_session(client)["session_id"]
    response = client.get(f"/sessions/{sid}/agreement")
    assert response.status_code == 409
    assert response.json()["error"] == "SessionNotComplete"


def complete_session_matching_rules(client):
    sid = create_session(client)["session_id"]
    # rules-v1 labels: R-1 NonFunctional (encrypt), R-2 Functional (default).
    for req_id, label in (("R-1", "NonFunctional"), ("R-2", "Functional")):
        client.post(f"/sessions/{sid}/annotations", json={
            "requirement_id": req_id, "axis": "FnF", "label": label,
        })
    return sid


def test_agreement_against_rules_perfect(client):
    sid = complete_session_matching_rules(client)
    body = client.get(f"/sessions/{sid}/agreement", params={"versus": "rules-v1"}).json()
    fnf = body["axes"]["FnF"]
    assert fnf["stats"]["kappa"] == 1.0
    assert fnf["stats"]["interpretation_band"] == "AlmostPerfect"
    assert fnf["raters"] == ["expert-a", "rules-v1"]


def test_agreement_unknown_rater_404(client):
    sid = complete_session_matching_rules(client)
    response = client.get(f"/sessions/{sid}/agreement", params={"versus": "ghost"})
    assert response.status_code == 404
    assert response.json()["error"] == "UnknownRater"


def test_agreement_against_stored_rater_file(tmp_path):
    data_dir = tmp_path / "data"
    raters_dir = data_dir / "raters" / "svc"
    raters_dir.mkdir(parents=True)
    from reqbench.agreement import rater_export_to_dict

    stored = rater_export_to_dict("mock-gpt", "svc", {"FnF": {"R-1": "NonFunctional", "R-2": "NonFunctional"}})
    (raters_dir / "mock-gpt.json").write_text(json.dumps(stored), encoding="utf-8")

    app = create_app(data_dir, {"svc": CORPUS})
    with TestClient(app) as client:
        sid = complete_session_matching_rules(client)
        body = client.get(f"/sessions/{sid}/agreement", params={"versus": "mock-gpt"}).json()
        fnf = body["axes"]["FnF"]
        assert fnf["stats"]["p_o"] == 0.5
        assert len(fnf["disagreements"]) == 1


def test_export_empty_session_flagged_incomplete(client):
    sid = create_session(client)["session_id"]
    export = client.get(f"/sessions/{sid}/export").json()
    assert export["complete"] is False
    assert export["n_labeled"] == 0
    assert export["n_cells"] == 2


def test_export_is_loadable_by_agreement_module(client, tmp_path):
    from reqbench.agreement import load_rater_export

    sid = complete_session_matching_rules(client)
    raw = client.get(f"/sessions/{sid}/export").text
    path = tmp_path / "export.json"
    path.write_text(raw, encoding="utf-8")
    export = load_rater_export(path)
    assert export.rater_id == "expert-a"
    assert export.axes["FnF"] == {"R-1": "NonFunctional", "R-2": "Functional"}


def test_admin_view_includes_findings_and_hints(tmp_path):
    app = create_app(tmp_path / "data", {"hinted": HINTED})
    with TestClient(app) as client:
        body = client.get("/corpora/hinted/requirements").json()
    item = body["requirements"][0]
    assert "findings" in item and "classification" in item
    assert item["classification"]["label"] == "NonFunctional"


def test_corpora_listing(client):
    body = client.get("/corpora").json()
    assert body["corpora"][0]["name"] == "svc"
    assert body["corpora"][0]["n_requirements"] == 2


def test_placeholder_ui_served_without_bundle(client):
    response = client.get("/")
    assert response.status_code == 200
    assert "reqbench" in response.text


def test_static_ui_mounted_when_dir_given(tmp_path):
    ui_dir = tmp_path / "ui"
    ui_dir.mkdir()
    (ui_dir / "index.html").write_text("<html><body>bundle</body></html>", encoding="utf-8")
    app = create_app(tmp_path / "data", {"svc": CORPUS}, ui_dir=ui_dir)
    with TestClient(app) as client:
        response = client.get("/")
        assert "bundle" in response.text
