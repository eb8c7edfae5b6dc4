"""HTTP facade over the record store and workflow engine.

Every state-changing endpoint maps 1:1 onto a workflow-engine operation —
the service holds no workflow logic of its own, so no request sequence can
reach a state the state machine forbids. Errors use a uniform
``{code, message, detail}`` envelope. Mutations are idempotent via a
client-supplied ``X-Request-Id`` header: replaying a request id returns
the recorded response without re-executing.

In attended mode the human-in-the-loop transitions (referral, medication
plan, discharge) require an ``approved_by`` field.
"""

from __future__ import annotations

import json
import socket
import threading
from pathlib import Path

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import __version__, documents as docs, viewer as viewer_mod
from .documents import DiagnosisAssessment, MedicationRecommendation, ReferralReport
from .errors import (
    BudgetExhausted,
    DuplicatePatient,
    EmptyQuery,
    MedicalOSError,
    NoFinalAssessment,
    PortInUse,
    ScriptMiss,
    StoreUnavailable,
    UnknownPatient,
    UnknownSpecialty,
    WrongStage,
)
from .gateway import ScriptedChatBackend
from .store import DocKind, Store, StoreLayout, init_store
from .workflow import EpisodeRunner, ExamRequest, WorkflowPolicy

_STATUS_BY_ERROR = (
    (UnknownPatient, 404),
    (UnknownSpecialty, 404),
    (DuplicatePatient, 409),
    (BudgetExhausted, 409),
    (WrongStage, 409),
    (NoFinalAssessment, 409),
    (EmptyQuery, 400),
    (ScriptMiss, 502),
)


def _status_for(exc: Exception) -> int:
    for etype, status in _STATUS_BY_ERROR:
        if isinstance(exc, etype):
            return status
    if isinstance(exc, (ValueError, MedicalOSError)):
        return 400
    return 500


def _envelope(exc: Exception) -> dict:
    return {"code": type(exc).__name__, "message": str(exc), "detail": None}


# --- request bodies -----------------------------------------------------------


class PatientBody(BaseModel):
    patient_id: str
    demographics: str


class CaseBody(BaseModel):
    demographics: str | None = None


class TurnBody(BaseModel):
    speaker: str = Field(pattern="^(clinician|patient)$")
    text: str


class AssessmentBody(BaseModel):
    diagnosis: str
    confidence: int
    rationale: str = ""


class ExamBody(BaseModel):
    name: str
    rationale: str = ""


class ExamResultBody(BaseModel):
    content: str | None = None  # null records an unavailable-exam skip


class ReferralBody(BaseModel):
    recommended: str
    rationale: str = "Referral requested by clinician."
    clinical_summary: str = ""
    points_for_attention: list[str] = Field(default_factory=lambda: ["Review current report."])
    approved_by: str | None = None


class MedicationItem(BaseModel):
    brand_name: str = ""
    generic_name: str
    dosage: str
    frequency: str
    duration: str
    cautions: list[str] = Field(default_factory=list)
    side_effects: list[str] = Field(default_factory=list)
    patient_considerations: str = ""
    source: str = docs.UNVERIFIED_SOURCE


class MedicationsBody(BaseModel):
    medications: list[MedicationItem] = Field(default_factory=list)
    approved_by: str | None = None


class DischargeBody(BaseModel):
    approved_by: str | None = None


class ViewerBody(BaseModel):
    patient_id: str
    filename: str
    height: int = 20
    ops: list[dict] = Field(default_factory=list)  # {op: scroll|goto, ...}
    find: str | None = None


# --- application ----------------------------------------------------------------


class _CaseSessions:
    """In-memory per-case session state on top of the persisted episodes."""

    def __init__(self, store: Store, policy: WorkflowPolicy, chat_backend, knowledge):
        self.store = store
        self.policy = policy
        self.chat = chat_backend
        self.knowledge = knowledge
        self.runners: dict[str, EpisodeRunner] = {}
        self.turns: dict[str, list[dict]] = {}
        self.meds: dict[str, list[MedicationRecommendation]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def lock(self, case_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(case_id, threading.Lock())

    def runner(self, case_id: str) -> EpisodeRunner:
        if case_id not in self.runners:
            self.runners[case_id] = EpisodeRunner.resume(
                self.store, case_id, self.policy, self.chat, self.knowledge
            )
        return self.runners[case_id]


def create_app(
    store_root: str | Path,
    policy: WorkflowPolicy | None = None,
    chat_backend=None,
    knowledge=None,
    layout: StoreLayout | None = None,
    attended: bool = False,
    token: str | None = None,
    mode: str = "offline",
    ui_dir: str | Path | None = None,
) -> FastAPI:
    try:
        store = init_store(store_root, layout)
    except OSError as exc:
        raise StoreUnavailable(str(exc)) from exc
    policy = policy or WorkflowPolicy()
    chat_backend = chat_backend or ScriptedChatBackend([], strict=False, default_response="")
    sessions = _CaseSessions(store, policy, chat_backend, knowledge)
    app = FastAPI(title="medicalos", version=__version__)
    app.state.sessions = sessions
    app.state.attended = attended
    replays: dict[str, JSONResponse] = {}
    replay_guard = threading.Lock()

    def _auth(authorization: str | None = Header(default=None)) -> None:
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise PermissionError("missing or invalid bearer token")

    def _require_approval(approved_by: str | None) -> None:
        if attended and not approved_by:
            raise PermissionError("attended mode: this transition requires approved_by")

    @app.exception_handler(MedicalOSError)
    async def _domain_error(_req: Request, exc: MedicalOSError):
        return JSONResponse(status_code=_status_for(exc), content=_envelope(exc))

    @app.exception_handler(ValueError)
    async def _value_error(_req: Request, exc: ValueError):
        return JSONResponse(status_code=400, content=_envelope(exc))

    @app.exception_handler(PermissionError)
    async def _perm_error(_req: Request, exc: PermissionError):
        return JSONResponse(status_code=403, content=_envelope(exc))

    @app.exception_handler(FileNotFoundError)
    async def _missing(_req: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content=_envelope(exc))

    @app.middleware("http")
    async def _idempotency(request: Request, call_next):
        request_id = request.headers.get("X-Request-Id")
        if request_id is None or request.method not in ("POST", "PUT", "DELETE"):
            return await call_next(request)
        key = f"{request.method} {request.url.path} {request_id}"
        with replay_guard:
            cached = replays.get(key)
        if cached is not None:
            return JSONResponse(
                status_code=cached.status_code,
                content=json.loads(cached.body),
                headers={"X-Replayed": "true"},
            )
        response = await call_next(request)
        body = b"".join([chunk async for chunk in response.body_iterator])
        rebuilt = JSONResponse(
            status_code=response.status_code,
            content=json.loads(body) if body else None,
            media_type=response.media_type,
        )
        if response.status_code < 500:
            with replay_guard:
                replays[key] = rebuilt
        return rebuilt

    # --- read endpoints -------------------------------------------------------

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "mode": mode,
            "version": __version__,
            "attended": attended,
            "chat_backend": getattr(chat_backend, "backend_id", type(chat_backend).__name__),
        }

    @app.get("/patients/{patient_id}", dependencies=[Depends(_auth)])
    def get_patient(patient_id: str):
        matches = [f for f in store.find_patient(patient_id) if f.patient_id == patient_id]
        if not matches:
            raise UnknownPatient(patient_id)
        folder = matches[0]
        return {
            "patient_id": folder.patient_id,
            "location": {"kind": folder.location.kind, "specialty": folder.location.specialty},
            "documents": [
                {"filename": d.filename, "kind": d.doc_kind.value, "digest": d.content_digest}
                for d in folder.documents
            ],
        }

    @app.get("/patients/{patient_id}/documents/{filename}", dependencies=[Depends(_auth)])
    def get_document(patient_id: str, filename: str):
        return {"patient_id": patient_id, "filename": filename,
                "content": store.read_document(patient_id, filename)}

    @app.get("/search", dependencies=[Depends(_auth)])
    def search(q: str = "", scope: str = "all", arg: str | None = None, limit: int = 10):
        hits = store.search_keyword(q, scope=(scope, arg), limit=limit)
        return {
            "query": q,
            "hits": [
                {
                    "patient_id": h.doc.patient_id,
                    "filename": h.doc.filename,
                    "score": h.score,
                    "lines": [{"line": n, "text": t} for n, t in h.line_hits],
                }
                for h in hits
            ],
        }

    @app.get("/cases/{case_id}", dependencies=[Depends(_auth)])
    def get_case(case_id: str):
        runner = sessions.runner(case_id)
        from .workflow import state_to_json

        return state_to_json(runner.state)

    # --- workflow mutations -----------------------------------------------------

    @app.post("/patients", status_code=201, dependencies=[Depends(_auth)])
    def create_patient(body: PatientBody):
        folder = store.create_patient(body.patient_id, body.demographics)
        return {"patient_id": folder.patient_id, "location": folder.location.kind}

    @app.post("/cases/{case_id}", status_code=201, dependencies=[Depends(_auth)])
    def open_case(case_id: str, body: CaseBody):
        with sessions.lock(case_id):
            runner = EpisodeRunner(store, policy, chat_backend, knowledge)
            runner.start_episode(case_id, demographics=body.demographics)
            sessions.runners[case_id] = runner
            sessions.turns[case_id] = []
            from .workflow import state_to_json

            return state_to_json(runner.state)

    @app.post("/cases/{case_id}/inquiry/turns", status_code=201, dependencies=[Depends(_auth)])
    def add_turn(case_id: str, body: TurnBody):
        if not body.text.strip():
            raise ValueError("turn text must be non-empty")
        with sessions.lock(case_id):
            sessions.runner(case_id)  # 404s on unknown case
            turns = sessions.turns.setdefault(case_id, [])
            turns.append({"speaker": body.speaker, "text": body.text})
            return {"case_id": case_id, "turn_count": len(turns)}

    @app.get("/cases/{case_id}/inquiry/turns", dependencies=[Depends(_auth)])
    def list_turns(case_id: str):
        sessions.runner(case_id)
        return {"case_id": case_id, "turns": sessions.turns.get(case_id, [])}

    @app.post("/cases/{case_id}/reports", status_code=201, dependencies=[Depends(_auth)])
    def generate_report(case_id: str):
        """Close the inquiry and generate the initial structured report."""
        with sessions.lock(case_id):
            runner = sessions.runner(case_id)
            turns = sessions.turns.get(case_id, [])
            if not turns:
                raise WrongStage("no inquiry turns recorded")
            transcript = "\n".join(f"{t['speaker'].capitalize()}: {t['text']}" for t in turns)
            runner.record_inquiry(transcript)
            grounding = []
            if knowledge is not None:
                from .grounding import extract_key_terms

                for term in extract_key_terms(transcript, chat_backend).terms:
                    grounding.extend(knowledge.fetch_grounding(term))
            report = runner.generate_initial_report([transcript], grounding)
            return {"revision": report.revision, "report": docs.render_report(report)}

    @app.get("/cases/{case_id}/reports", dependencies=[Depends(_auth)])
    def list_reports(case_id: str):
        folder = store.find_patient(case_id)
        folder = next((f for f in folder if f.patient_id == case_id), None)
        if folder is None:
            raise UnknownPatient(case_id)
        reports = [d.filename for d in folder.documents if d.doc_kind is DocKind.REPORT]
        return {"case_id": case_id, "revisions": list(range(1, len(reports) + 1)), "files": reports}

    @app.get("/cases/{case_id}/reports/{revision}", dependencies=[Depends(_auth)])
    def get_report(case_id: str, revision: int):
        listing = list_reports(case_id)
        if revision < 1 or revision > len(listing["files"]):
            raise FileNotFoundError(f"report revision {revision} for {case_id}")
        filename = listing["files"][revision - 1]
        return {
            "case_id": case_id,
            "revision": revision,
            "filename": filename,
            "content": store.read_document(case_id, filename),
        }

    @app.post("/cases/{case_id}/assessment", dependencies=[Depends(_auth)])
    def assess(case_id: str, body: AssessmentBody):
        with sessions.lock(case_id):
            runner = sessions.runner(case_id)
            decision = runner.apply_assessment(
                DiagnosisAssessment(body.diagnosis, body.confidence, body.rationale)
            )
            return {
                "decision": decision.value,
                "exams_used": runner.state.exams_used,
                "exam_budget": runner.state.exam_budget,
            }

    @app.post("/cases/{case_id}/exams", status_code=201, dependencies=[Depends(_auth)])
    def request_exam(case_id: str, body: ExamBody):
        with sessions.lock(case_id):
            runner = sessions.runner(case_id)
            runner.request_exam(ExamRequest(body.name, body.rationale))
            return {"pending_exam": body.name, "exams_used": runner.state.exams_used}

    @app.post("/cases/{case_id}/exams/result", dependencies=[Depends(_auth)])
    def ingest_exam_result(case_id: str, body: ExamResultBody):
        with sessions.lock(case_id):
            runner = sessions.runner(case_id)
            explanation = runner.ingest_exam_outcome(body.content)
            return {
                "fulfilled": body.content is not None,
                "exams_used": runner.state.exams_used,
                "report_revisions": runner.state.report_revisions,
                "explanation": None if explanation is None else docs.render_explanation(explanation),
            }

    @app.post("/cases/{case_id}/referral", dependencies=[Depends(_auth)])
    def refer(case_id: str, body: ReferralBody):
        _require_approval(body.approved_by)
        with sessions.lock(case_id):
            runner = sessions.runner(case_id)
            referral = ReferralReport(
                current_specialty=runner.current_specialty,
                recommended_specialty=body.recommended,
                rationale=body.rationale,
                clinical_summary=body.clinical_summary,
                points_for_attention=tuple(body.points_for_attention),
            )
            runner.apply_referral(referral)
            return {"specialty": runner.state.specialty, "stage": runner.state.stage.value}

    @app.post("/cases/{case_id}/medications", dependencies=[Depends(_auth)])
    def plan_medications(case_id: str, body: MedicationsBody):
        _require_approval(body.approved_by)
        with sessions.lock(case_id):
            runner = sessions.runner(case_id)
            if runner.state.final_assessment is None:
                raise NoFinalAssessment("medication planning requires a final assessment")
            meds = [
                MedicationRecommendation(
                    brand_name=m.brand_name,
                    generic_name=m.generic_name,
                    dosage=m.dosage,
                    frequency=m.frequency,
                    duration=m.duration,
                    cautions=tuple(m.cautions),
                    side_effects=tuple(m.side_effects),
                    patient_considerations=m.patient_considerations,
                    source=m.source,
                )
                for m in body.medications
            ]
            sessions.meds[case_id] = meds[: policy.medication_count]
            plan = docs.render_medication_plan(
                runner.state.final_assessment.diagnosis, sessions.meds[case_id]
            )
            return {"count": len(sessions.meds[case_id]), "plan": plan}

    @app.post("/cases/{case_id}/discharge", dependencies=[Depends(_auth)])
    def discharge(case_id: str, body: DischargeBody):
        _require_approval(body.approved_by)
        with sessions.lock(case_id):
            runner = sessions.runner(case_id)
            runner.finalize(sessions.meds.get(case_id, []))
            return {"stage": runner.state.stage.value, "final_diagnosis": runner.state.final_assessment.diagnosis}

    # --- stateless viewer --------------------------------------------------------

    @app.post("/viewer", dependencies=[Depends(_auth)])
    def viewer(body: ViewerBody):
        content = store.read_document(body.patient_id, body.filename)
        state = viewer_mod.open_document(content, body.height)
        for op in body.ops:
            kind = op.get("op")
            if kind == "scroll":
                state = viewer_mod.scroll(state, int(op.get("delta", 0)))
            elif kind == "goto":
                state = viewer_mod.goto_line(state, int(op.get("line", 1)))
            elif kind == "goto_first":
                state = viewer_mod.goto_first(state, str(op.get("keyword", ""))) or state
            else:
                raise ValueError(f"unknown viewer op {kind!r}")
        matches = viewer_mod.find_all(state, body.find) if body.find else []
        top, height = state.top_line, state.height
        return {
            "cursor_line": state.cursor_line,
            "top_line": top,
            "height": height,
            "line_count": state.line_count,
            "viewport": list(state.lines[top - 1 : top - 1 + height]),
            "matches": [
                {"line": line, "spans": [{"start": s, "end": e} for s, e in spans]}
                for line, spans in matches
            ],
            "match_count": sum(len(spans) for _, spans in matches),
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def check_port_free(host: str, port: int) -> None:
    """Raise :class:`PortInUse` when the address is already bound."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            probe.bind((host, port))
        except OSError as exc:
            raise PortInUse(f"{host}:{port} ({exc})") from exc


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8077) -> None:
    """Run the service; raises :class:`PortInUse` before starting uvicorn."""
    import uvicorn

    check_port_free(host, port)
    uvicorn.run(app, host=host, port=port, log_level="warning")
