"""Clinical workflow state machine.

Pure layer: :class:`CaseState` plus transition functions that take and
return states and never touch I/O, so gating and budget logic can be
tested exhaustively. Effectful layer: :class:`EpisodeRunner`, which
composes transitions with record-store writes, document generation, and
``episode.json`` persistence inside the patient folder.

Gating rule: a diagnosis is accepted when its confidence strictly
exceeds the policy threshold (default 7); when the exam budget (default
4) is spent and confidence has not cleared the bar, the latest
assessment becomes a forced final diagnosis.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from enum import Enum

from . import documents as docs
from .documents import (
    DiagnosisAssessment,
    MedicationRecommendation,
    ReferralReport,
    StructuredReport,
    UpdateExplanation,
)
from .errors import (
    AlreadyCentral,
    BudgetExhausted,
    NoFinalAssessment,
    UnknownPatient,
    WrongStage,
)
from .store import DocKind, Store

EPISODE_FILE = "episode.json"
PRIMARY_CARE = "PrimaryCare"  # pseudo-specialty for the pre-referral stage


class Stage(str, Enum):
    INQUIRY = "Inquiry"
    TRIAGE = "Triage"
    UNDER_SPECIALTY = "UnderSpecialty"
    AWAITING_EXAM_RESULT = "AwaitingExamResult"
    REPORTING = "Reporting"
    REFERRAL_PENDING = "ReferralPending"
    MEDICATION_PLANNING = "MedicationPlanning"
    DISCHARGED = "Discharged"


class Decision(str, Enum):
    ACCEPT_DIAGNOSIS = "AcceptDiagnosis"
    REQUEST_EXAM = "RequestExam"
    FORCED_FINAL = "ForcedFinal"


@dataclass(frozen=True)
class WorkflowPolicy:
    exam_budget: int = 4
    confidence_accept_threshold: int = 7  # accept iff strictly greater
    max_key_terms: int = 3
    medication_count: int = 3

    def __post_init__(self):
        if min(self.exam_budget, self.max_key_terms, self.medication_count) < 1:
            raise ValueError("policy values must be positive")
        if not 1 <= self.confidence_accept_threshold <= 10:
            raise ValueError("threshold must be in 1..10")


@dataclass(frozen=True)
class ExamRequest:
    name: str
    rationale: str = ""
    requested_at: float = 0.0

    def __post_init__(self):
        if not self.name:
            raise ValueError("exam name must be non-empty")


@dataclass(frozen=True)
class CaseState:
    patient_id: str
    stage: Stage = Stage.INQUIRY
    specialty: str | None = None  # None while in central / primary care
    pending_exam: ExamRequest | None = None
    exams_used: int = 0
    exam_budget: int = 4
    results_ingested: int = 0
    report_revisions: int = 0
    latest_assessment: DiagnosisAssessment | None = None
    final_assessment: DiagnosisAssessment | None = None
    trace: tuple[dict, ...] = ()

    def log(self, event: str, **extra) -> "CaseState":
        entry = {"event": event, "stage": self.stage.value, **extra}
        return replace(self, trace=self.trace + (entry,))


# --- pure transitions ---------------------------------------------------------


def gate(confidence: int, exams_used: int, policy: WorkflowPolicy) -> Decision:
    """Pure gating decision; exhaustively testable."""
    if confidence > policy.confidence_accept_threshold:
        return Decision.ACCEPT_DIAGNOSIS
    if exams_used >= policy.exam_budget:
        return Decision.FORCED_FINAL
    return Decision.REQUEST_EXAM


def new_case(patient_id: str, policy: WorkflowPolicy) -> CaseState:
    return CaseState(patient_id=patient_id, exam_budget=policy.exam_budget)


def t_record_inquiry(state: CaseState) -> CaseState:
    if state.stage is not Stage.INQUIRY:
        raise WrongStage(f"record_inquiry at {state.stage.value}")
    return replace(state, stage=Stage.TRIAGE).log("inquiry_recorded")


def t_record_initial_report(state: CaseState) -> CaseState:
    if state.stage not in (Stage.TRIAGE, Stage.UNDER_SPECIALTY):
        raise WrongStage(f"initial report at {state.stage.value}")
    if state.report_revisions != 0:
        raise WrongStage("initial report already recorded")
    return replace(state, stage=Stage.REPORTING, report_revisions=1).log("initial_report")


def t_apply_assessment(
    state: CaseState, a: DiagnosisAssessment, policy: WorkflowPolicy
) -> tuple[Decision, CaseState]:
    if state.stage not in (Stage.TRIAGE, Stage.REPORTING):
        raise WrongStage(f"apply_assessment at {state.stage.value}")
    decision = gate(a.confidence, state.exams_used, policy)
    new = replace(state, latest_assessment=a)
    if decision in (Decision.ACCEPT_DIAGNOSIS, Decision.FORCED_FINAL):
        new = replace(new, final_assessment=a)
    return decision, new.log("assessment", decision=decision.value, confidence=a.confidence)


def t_request_exam(state: CaseState, req: ExamRequest) -> CaseState:
    if state.stage not in (Stage.TRIAGE, Stage.REPORTING, Stage.UNDER_SPECIALTY):
        raise WrongStage(f"request_exam at {state.stage.value}")
    if state.report_revisions < 1:
        raise WrongStage("exam requests are driven by the current report; none exists yet")
    if state.pending_exam is not None:
        raise WrongStage("an exam request is already outstanding")
    if state.exams_used >= state.exam_budget:
        raise BudgetExhausted(f"{state.exams_used}/{state.exam_budget} exams used")
    return replace(state, stage=Stage.AWAITING_EXAM_RESULT, pending_exam=req).log(
        "exam_requested", exam=req.name
    )


def t_ingest_exam_outcome(state: CaseState, fulfilled: bool) -> CaseState:
    """Both arms consume budget; only a fulfilled result adds a report revision."""
    if state.stage is not Stage.AWAITING_EXAM_RESULT or state.pending_exam is None:
        raise WrongStage("no outstanding exam request")
    new = replace(
        state,
        stage=Stage.REPORTING,
        pending_exam=None,
        exams_used=state.exams_used + 1,
    )
    if fulfilled:
        new = replace(
            new,
            results_ingested=state.results_ingested + 1,
            report_revisions=state.report_revisions + 1,
        )
    return new.log("exam_outcome", fulfilled=fulfilled)


def t_apply_referral(state: CaseState, recommended: str) -> CaseState:
    if state.stage not in (Stage.TRIAGE, Stage.REPORTING, Stage.UNDER_SPECIALTY, Stage.REFERRAL_PENDING):
        raise WrongStage(f"apply_referral at {state.stage.value}")
    # Before the first report the case parks under the specialty; later
    # referrals change the managing specialty but reporting continues.
    new_stage = Stage.UNDER_SPECIALTY if state.report_revisions == 0 else Stage.REPORTING
    return replace(state, stage=new_stage, specialty=recommended).log(
        "referred", specialty=recommended
    )


def t_finalize(state: CaseState) -> CaseState:
    if state.stage is Stage.DISCHARGED:
        raise WrongStage("episode already discharged")
    if state.pending_exam is not None:
        raise WrongStage("cannot discharge with an outstanding exam request")
    if state.final_assessment is None:
        raise NoFinalAssessment("no accepted or forced-final assessment")
    return replace(state, stage=Stage.DISCHARGED, specialty=None).log("discharged")


# --- serialization --------------------------------------------------------------


def state_to_json(state: CaseState) -> dict:
    def _assessment(a: DiagnosisAssessment | None):
        return None if a is None else {"diagnosis": a.diagnosis, "confidence": a.confidence, "rationale": a.rationale}

    return {
        "patient_id": state.patient_id,
        "stage": state.stage.value,
        "specialty": state.specialty,
        "pending_exam": None
        if state.pending_exam is None
        else {
            "name": state.pending_exam.name,
            "rationale": state.pending_exam.rationale,
            "requested_at": state.pending_exam.requested_at,
        },
        "exams_used": state.exams_used,
        "exam_budget": state.exam_budget,
        "results_ingested": state.results_ingested,
        "report_revisions": state.report_revisions,
        "latest_assessment": _assessment(state.latest_assessment),
        "final_assessment": _assessment(state.final_assessment),
        "trace": list(state.trace),
    }


def state_from_json(data: dict) -> CaseState:
    def _assessment(d):
        return None if d is None else DiagnosisAssessment(d["diagnosis"], d["confidence"], d.get("rationale", ""))

    pending = data.get("pending_exam")
    return CaseState(
        patient_id=data["patient_id"],
        stage=Stage(data["stage"]),
        specialty=data.get("specialty"),
        pending_exam=None
        if pending is None
        else ExamRequest(pending["name"], pending.get("rationale", ""), pending.get("requested_at", 0.0)),
        exams_used=data["exams_used"],
        exam_budget=data["exam_budget"],
        results_ingested=data["results_ingested"],
        report_revisions=data["report_revisions"],
        latest_assessment=_assessment(data.get("latest_assessment")),
        final_assessment=_assessment(data.get("final_assessment")),
        trace=tuple(data.get("trace", [])),
    )


# --- effectful runner -------------------------------------------------------------


class EpisodeRunner:
    """Drives one patient episode against the record store.

    One episode is strictly sequential; the runner persists
    ``episode.json`` inside the patient folder after every transition so a
    reload mid-episode resumes identically.
    """

    def __init__(self, store: Store, policy: WorkflowPolicy, chat_backend, knowledge=None):
        self.store = store
        self.policy = policy
        self.chat = chat_backend
        self.knowledge = knowledge
        self.state: CaseState | None = None
        self._latest_report: StructuredReport | None = None

    # -- persistence --

    def _persist(self) -> None:
        assert self.state is not None
        folder = self.store._folder_path(self.state.patient_id)
        if folder is None:
            raise UnknownPatient(self.state.patient_id)
        payload = state_to_json(self.state)
        if self._latest_report is not None:
            payload["latest_report"] = docs.render_report(self._latest_report)
        (folder / EPISODE_FILE).write_text(json.dumps(payload, indent=2), encoding="utf-8")

    @classmethod
    def resume(cls, store: Store, patient_id: str, policy: WorkflowPolicy, chat_backend, knowledge=None) -> "EpisodeRunner":
        folder = store._folder_path(patient_id)
        if folder is None or not (folder / EPISODE_FILE).is_file():
            raise UnknownPatient(f"no persisted episode for {patient_id}")
        data = json.loads((folder / EPISODE_FILE).read_text(encoding="utf-8"))
        runner = cls(store, policy, chat_backend, knowledge)
        runner.state = state_from_json(data)
        if data.get("latest_report"):
            result = docs.validate_report(data["latest_report"])
            runner._latest_report = result.report
        return runner

    # -- workflow operations --

    def start_episode(self, patient_id: str, demographics: str | None = None) -> CaseState:
        existing = self.store._folder_path(patient_id)
        if existing is None:
            if demographics is None:
                raise UnknownPatient(patient_id)
            self.store.create_patient(patient_id, demographics)
        self.state = new_case(patient_id, self.policy)
        self._persist()
        return self.state

    def record_inquiry(self, transcript: str) -> CaseState:
        if not transcript.strip():
            raise ValueError("transcript is empty")
        assert self.state is not None
        self.state = t_record_inquiry(self.state)
        self.store.store_document(self.state.patient_id, DocKind.TRANSCRIPT, transcript)
        self._persist()
        return self.state

    def generate_initial_report(self, inputs: list[str], grounding=None) -> StructuredReport:
        assert self.state is not None
        grounding = grounding or []
        report = docs.generate_report(inputs, grounding, self.chat)
        self.state = t_record_initial_report(self.state)
        self._latest_report = report
        self.store.store_document(self.state.patient_id, DocKind.REPORT, docs.render_report(report))
        self._persist()
        return report

    def apply_assessment(self, a: DiagnosisAssessment) -> Decision:
        assert self.state is not None
        decision, self.state = t_apply_assessment(self.state, a, self.policy)
        if self._latest_report is not None:
            self._latest_report = replace(self._latest_report, assessment=a)
        self._persist()
        return decision

    def request_exam(self, req: ExamRequest) -> CaseState:
        assert self.state is not None
        self.state = t_request_exam(self.state, req)
        self._persist()
        return self.state

    def ingest_exam_outcome(self, result_content: str | None, grounding=None) -> UpdateExplanation | None:
        """``result_content=None`` records an unavailable-exam skip."""
        assert self.state is not None
        exam = self.state.pending_exam
        if self.state.stage is not Stage.AWAITING_EXAM_RESULT or exam is None:
            raise WrongStage("no outstanding exam request")
        explanation = None
        if result_content is not None:
            doc_content = f"# Exam Result: {exam.name}\n\n{result_content}"
            self.store.store_document(self.state.patient_id, DocKind.EXAM_RESULT, doc_content)
            if self._latest_report is None:
                raise WrongStage("cannot update a report before the initial report exists")
            updated, explanation = docs.update_report(
                self._latest_report, [(exam.name, result_content)], grounding or [], self.chat
            )
            self._latest_report = updated
            self.store.store_document(self.state.patient_id, DocKind.REPORT, docs.render_report(updated))
            self.store.store_document(
                self.state.patient_id, DocKind.UPDATE_EXPLANATION, docs.render_explanation(explanation)
            )
        self.state = t_ingest_exam_outcome(self.state, fulfilled=result_content is not None)
        self._persist()
        return explanation

    def apply_referral(self, referral: ReferralReport) -> CaseState:
        assert self.state is not None
        self.store.store_document(
            self.state.patient_id, DocKind.REFERRAL_REPORT, docs.render_referral(referral)
        )
        self.store.move_to_specialty(self.state.patient_id, referral.recommended_specialty)
        self.state = t_apply_referral(self.state, referral.recommended_specialty)
        self._persist()
        return self.state

    def finalize(self, meds: list[MedicationRecommendation]) -> CaseState:
        assert self.state is not None
        if self.state.final_assessment is None:
            raise NoFinalAssessment("finalize before any accepted or forced-final assessment")
        plan = docs.render_medication_plan(self.state.final_assessment.diagnosis, meds)
        self.store.store_document(self.state.patient_id, DocKind.MEDICATION_PLAN, plan)
        try:
            self.store.discharge_to_central(self.state.patient_id)
        except AlreadyCentral:
            pass  # never referred; folder is already in the central database
        self.state = t_finalize(self.state)
        self._persist()
        return self.state

    @property
    def current_specialty(self) -> str:
        assert self.state is not None
        return self.state.specialty or PRIMARY_CARE

    @property
    def latest_report(self) -> StructuredReport | None:
        return self._latest_report
