"""HTTP service tests: error envelopes, idempotent mutations, auth,
attended-mode approval gates, and an API-level state-machine fuzz."""

import random
import socket

import pytest
from fastapi.testclient import TestClient

from medicalos.api import check_port_free, create_app
from medicalos.errors import PortInUse
from medicalos.gateway import ScriptedChatBackend, ScriptEntry

from .conftest import report_markdown

MEDS = [
    {
        "generic_name": "clarithromycin",
        "dosage": "500 mg",
        "frequency": "every 12 hours",
        "duration": "7 days",
    }
]


def _backend() -> ScriptedChatBackend:
    return ScriptedChatBackend(
        [
            ScriptEntry("regex", r"Write a structured medical report", report_markdown(confidence=6)),
            ScriptEntry(
                "regex",
                r"Update the medical report",
                report_markdown(confidence=8, revision=2, overrides={"Test Results": "New result present."}),
            ),
        ],
        strict=False,
        default_response="ok",
    )


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "store", chat_backend=_backend())
    return TestClient(app)


def _drive_to_report(client, case_id="p-001"):
    assert client.post(f"/cases/{case_id}", json={"demographics": "adult, cough"}).status_code == 201
    for speaker, text in (("clinician", "What brings you in?"), ("patient", "A bad cough.")):
        r = client.post(f"/cases/{case_id}/inquiry/turns", json={"speaker": speaker, "text": text})
        assert r.status_code == 201
    r = client.post(f"/cases/{case_id}/reports")
    assert r.status_code == 201
    return case_id


def test_healthz_reports_offline_mode(client):
    body = client.get("/healthz").json()
    assert body["status"] == "ok"
    assert body["mode"] == "offline"
    assert "chat_backend" in body and "version" in body


def test_end_to_end_case_over_http(client):
    case_id = _drive_to_report(client)

    state = client.get(f"/cases/{case_id}").json()
    assert state["stage"] == "Reporting"
    assert state["report_revisions"] == 1

    r = client.post(f"/cases/{case_id}/assessment", json={"diagnosis": "bronchitis", "confidence": 6})
    assert r.json()["decision"] == "RequestExam"
    assert client.post(f"/cases/{case_id}/exams", json={"name": "chest X-ray"}).status_code == 201
    r = client.post(f"/cases/{case_id}/exams/result", json={"content": "Mild infiltrate."})
    assert r.json()["report_revisions"] == 2
    assert r.json()["explanation"] is not None

    r = client.post(f"/cases/{case_id}/assessment", json={"diagnosis": "pneumonia", "confidence": 9})
    assert r.json()["decision"] == "AcceptDiagnosis"
    assert client.post(f"/cases/{case_id}/medications", json={"medications": MEDS}).json()["count"] == 1
    r = client.post(f"/cases/{case_id}/discharge", json={})
    assert r.json() == {"stage": "Discharged", "final_diagnosis": "pneumonia"}

    folder = client.get(f"/patients/{case_id}").json()
    assert folder["location"]["kind"] == "central"
    kinds = {d["kind"] for d in folder["documents"]}
    assert {"Transcript", "Report", "ExamResult", "UpdateExplanation", "MedicationPlan"} <= kinds

    listing = client.get(f"/cases/{case_id}/reports").json()
    assert listing["revisions"] == [1, 2]
    rev2 = client.get(f"/cases/{case_id}/reports/2").json()
    assert "New result present." in rev2["content"]


def test_turn_idempotency_via_request_id(client):
    case_id = "p-idem"
    client.post(f"/cases/{case_id}", json={"demographics": "adult"})
    headers = {"X-Request-Id": "turn-1"}
    body = {"speaker": "patient", "text": "hello"}
    first = client.post(f"/cases/{case_id}/inquiry/turns", json=body, headers=headers)
    second = client.post(f"/cases/{case_id}/inquiry/turns", json=body, headers=headers)
    assert first.json() == second.json() == {"case_id": case_id, "turn_count": 1}
    assert second.headers.get("X-Replayed") == "true"
    turns = client.get(f"/cases/{case_id}/inquiry/turns").json()["turns"]
    assert len(turns) == 1


def test_error_envelopes(client):
    missing = client.get("/cases/nobody")
    assert missing.status_code == 404
    assert set(missing.json()) == {"code", "message", "detail"}

    case_id = _drive_to_report(client, "p-err")
    not_there = client.get(f"/cases/{case_id}/reports/9")
    assert not_there.status_code == 404

    empty = client.get("/search", params={"q": "   "})
    assert empty.status_code == 400
    assert empty.json()["code"] == "EmptyQuery"

    dup = client.post("/patients", json={"patient_id": case_id, "demographics": "x"})
    assert dup.status_code == 409
    assert dup.json()["code"] == "DuplicatePatient"


def test_budget_exhaustion_maps_to_conflict(client):
    case_id = _drive_to_report(client, "p-budget")
    for i in range(4):
        client.post(f"/cases/{case_id}/assessment", json={"diagnosis": "tbd", "confidence": 5})
        assert client.post(f"/cases/{case_id}/exams", json={"name": f"test {i}"}).status_code == 201
        client.post(f"/cases/{case_id}/exams/result", json={"content": None})
    client.post(f"/cases/{case_id}/assessment", json={"diagnosis": "tbd", "confidence": 5})
    over = client.post(f"/cases/{case_id}/exams", json={"name": "one too many"})
    assert over.status_code == 409
    assert over.json()["code"] == "BudgetExhausted"


def test_bearer_token_auth(tmp_path):
    app = create_app(tmp_path / "store", chat_backend=_backend(), token="s3cret")
    client = TestClient(app)
    assert client.get("/healthz").status_code == 200  # health stays open
    assert client.get("/search", params={"q": "x"}).status_code == 403
    ok = client.get("/search", params={"q": "x"}, headers={"Authorization": "Bearer s3cret"})
    assert ok.status_code == 200


def test_attended_mode_requires_approval(tmp_path):
    app = create_app(tmp_path / "store", chat_backend=_backend(), attended=True)
    client = TestClient(app)
    case_id = _drive_to_report(client, "p-att")
    denied = client.post(f"/cases/{case_id}/referral", json={"recommended": "Cardiology"})
    assert denied.status_code == 403
    approved = client.post(
        f"/cases/{case_id}/referral",
        json={"recommended": "Cardiology", "approved_by": "dr-lee"},
    )
    assert approved.status_code == 200
    assert approved.json()["specialty"] == "Cardiology"

    client.post(f"/cases/{case_id}/assessment", json={"diagnosis": "angina", "confidence": 9})
    assert client.post(f"/cases/{case_id}/discharge", json={}).status_code == 403
    done = client.post(f"/cases/{case_id}/discharge", json={"approved_by": "dr-lee"})
    assert done.status_code == 200


def test_viewer_endpoint_matches_library(client):
    case_id = _drive_to_report(client, "p-view")
    listing = client.get(f"/cases/{case_id}/reports").json()
    body = {
        "patient_id": case_id,
        "filename": listing["files"][0],
        "height": 5,
        "ops": [{"op": "goto_first", "keyword": "## Test Results"}],
        "find": "##",
    }
    view = client.post("/viewer", json=body).json()
    assert view["viewport"][0] == "## Test Results"
    assert view["cursor_line"] == view["top_line"]
    assert view["match_count"] >= 8  # seven sections plus sources

    bad = client.post("/viewer", json={**body, "ops": [{"op": "teleport"}]})
    assert bad.status_code == 400


def test_port_in_use_detected():
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as holder:
        holder.bind(("127.0.0.1", 0))
        holder.listen(1)
        port = holder.getsockname()[1]
        with pytest.raises(PortInUse):
            check_port_free("127.0.0.1", port)


def test_random_endpoint_sequences_keep_invariants(client):
    """API fuzz: no request ordering reaches an invariant-violating state."""
    rng = random.Random(7)
    case_id = _drive_to_report(client, "p-fuzz")
    actions = ("assess_low", "assess_high", "exam", "result", "skip", "refer", "discharge")
    for _ in range(120):
        action = rng.choice(actions)
        if action == "assess_low":
            client.post(f"/cases/{case_id}/assessment", json={"diagnosis": "x", "confidence": rng.randint(1, 7)})
        elif action == "assess_high":
            client.post(f"/cases/{case_id}/assessment", json={"diagnosis": "x", "confidence": rng.randint(8, 10)})
        elif action == "exam":
            client.post(f"/cases/{case_id}/exams", json={"name": "anything"})
        elif action == "result":
            client.post(f"/cases/{case_id}/exams/result", json={"content": "data"})
        elif action == "skip":
            client.post(f"/cases/{case_id}/exams/result", json={"content": None})
        elif action == "refer":
            client.post(f"/cases/{case_id}/referral", json={"recommended": "Neurology"})
        else:
            client.post(f"/cases/{case_id}/discharge", json={})
        state = client.get(f"/cases/{case_id}").json()
        assert state["exams_used"] <= state["exam_budget"]
        assert state["report_revisions"] == 1 + state["results_ingested"]
        if state["stage"] == "Discharged":
            assert state["pending_exam"] is None
            break
