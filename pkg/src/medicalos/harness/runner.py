"""Benchmark runner: drives one full workflow episode per case and
aggregates deterministic metrics.

Each case gets its own record store, knowledge cache, and scripted chat
backend under ``out_dir/cases/<case_id>/``, so cases are independent and
can run on a worker pool. Reduction is ordered by case id and all floats
are formatted identically, which makes ``metrics.json`` and the SVG plots
byte-reproducible across runs and worker counts.
"""

from __future__ import annotations

import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .. import react
from ..documents import DiagnosisAssessment, generate_medications, generate_referral, render_report
from ..errors import GenerationMalformed, UnknownSpecialtyProposed
from ..gateway import TrigramEmbeddingBackend
from ..grounding import KnowledgeClient, extract_key_terms
from ..store import DEFAULT_SPECIALTIES, DocKind, StoreLayout, init_store
from ..workflow import Decision, EpisodeRunner, ExamRequest, WorkflowPolicy
from .cases import CaseSpec, load_dataset
from .matching import CATEGORY_RULES_VERSION, categorize_exam, match_exam, score_diagnosis
from .patient import PATIENT_PERSONA_PREFIX, simulate_patient_turn
from .scripting import (
    INQUIRY_QUESTIONS,
    assessment_goal,
    build_case_backend,
    parse_assessment_answer,
    script_of,
)

logger = logging.getLogger(__name__)

FALLBACK_EXAM = "follow-up examination"
FALLBACK_CONFIDENCE = 5  # assumed when an assessment omits its confidence


@dataclass(frozen=True)
class BenchmarkConfig:
    dataset_dir: str | Path
    out_dir: str | Path
    workers: int = 4
    offline: bool = True
    policy: WorkflowPolicy = field(default_factory=WorkflowPolicy)
    specialties: tuple[str, ...] = DEFAULT_SPECIALTIES
    match_threshold: float = 0.5
    backend_factory: object = None  # callable CaseSpec -> chat backend; default scripted
    fixtures_dir: str | Path | None = None  # extra grounding fixtures

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class CaseResult:
    case_id: str
    specialty: str
    truth_diagnosis: str
    final_diagnosis: str = ""
    final_confidence: int = 0
    final_decision: str = ""
    diagnosis_score: float = 0.0
    exams_requested: int = 0
    exams_ordered: int = 0
    exams_skipped: int = 0
    exam_categories: dict = field(default_factory=dict)  # of ordered exams
    report_revisions: int = 0
    results_ingested: int = 0
    referrals: list = field(default_factory=list)  # recommended specialties, in order
    referral_failures: int = 0
    first_referral_correct: bool | None = None
    final_referral_correct: bool | None = None
    medication_count: int = 0
    medication_failed: bool = False
    patient_prompt_count: int = 0
    errors: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _assessment_registry(store) -> react.ToolRegistry:
    def _search(query: str) -> str:
        hits = store.search_keyword(query, limit=5)
        if not hits:
            return "no documents matched"
        return "\n".join(f"{h.doc.patient_id}/{h.doc.filename}: {h.score} line(s)" for h in hits)

    registry = react.ToolRegistry()
    registry.register(
        react.ToolSpec(
            "search_keyword",
            "Search all stored patient documents for a keyword.",
            (react.ToolParam("query", "string"),),
        ),
        _search,
    )
    return registry


def _capture_prompts(backend, sink: list) -> None:
    def _on_request(messages) -> None:
        last = messages[-1]
        sink.append(
            {
                "role": last.role,
                "content": last.content,
                "is_patient_persona": last.content.startswith(PATIENT_PERSONA_PREFIX),
            }
        )

    backend.on_request = _on_request


def run_case(case: CaseSpec, cfg: BenchmarkConfig, case_dir: Path) -> CaseResult:
    """Run one complete scripted episode; never raises, errors are recorded."""
    result = CaseResult(case.case_id, case.specialty, case.truth_diagnosis)
    case_dir.mkdir(parents=True, exist_ok=True)
    prompts: list[dict] = []
    try:
        _run_case_inner(case, cfg, case_dir, result, prompts)
    except Exception as exc:  # keep the benchmark total even on a broken case
        logger.exception("case %s failed", case.case_id)
        result.errors.append(f"{type(exc).__name__}: {exc}")
    result.patient_prompt_count = sum(1 for p in prompts if p["is_patient_persona"])
    with (case_dir / "prompts.jsonl").open("w", encoding="utf-8") as fh:
        for p in prompts:
            fh.write(json.dumps(p, sort_keys=True) + "\n")
    (case_dir / "result.json").write_text(
        json.dumps(result.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return result


def _run_case_inner(
    case: CaseSpec, cfg: BenchmarkConfig, case_dir: Path, result: CaseResult, prompts: list
) -> None:
    factory = cfg.backend_factory or build_case_backend
    backend = factory(case)
    _capture_prompts(backend, prompts)
    embed = TrigramEmbeddingBackend()
    specialties = tuple(dict.fromkeys(cfg.specialties + (case.specialty,)))
    store = init_store(case_dir / "store", StoreLayout(specialties=specialties))
    knowledge = KnowledgeClient(case_dir / "cache", offline=cfg.offline, fixtures_dir=cfg.fixtures_dir)
    runner = EpisodeRunner(store, cfg.policy, backend, knowledge)
    registry = _assessment_registry(store)
    script = script_of(case)
    scheduled = {}
    for ref in script["referrals"]:
        scheduled.setdefault(int(ref.get("after_round", 0)), []).append(ref)

    runner.start_episode(case.case_id, demographics=case.actor_profile)
    store.store_document(case.case_id, DocKind.HISTORY, case.history)

    lines = []
    for question in INQUIRY_QUESTIONS:
        answer = simulate_patient_turn(case, question, backend)
        lines += [f"Clinician: {question}", f"Patient: {answer}", ""]
    transcript = "\n".join(lines)
    runner.record_inquiry(transcript)

    terms = extract_key_terms(transcript, backend).terms
    grounding = []
    for term in terms:
        grounding.extend(knowledge.fetch_grounding(term))
    runner.generate_initial_report([transcript, case.history], grounding)

    def _apply_scheduled(round_idx: int) -> None:
        for ref in scheduled.get(round_idx, []):
            summary = render_report(runner.latest_report)
            try:
                referral = generate_referral(summary, runner.current_specialty, backend, specialties)
            except (UnknownSpecialtyProposed, GenerationMalformed) as exc:
                result.referral_failures += 1
                result.errors.append(f"referral: {type(exc).__name__}: {exc}")
                continue
            if referral is None:
                continue
            runner.apply_referral(referral)
            result.referrals.append(referral.recommended_specialty)

    _apply_scheduled(0)

    round_idx = 0
    exam_idx = 0
    decision = None
    while True:
        goal = assessment_goal(round_idx, runner.state.report_revisions, render_report(runner.latest_report))
        outcome, _trace = react.run_episode(goal, registry, backend)
        if outcome is None:
            result.errors.append(f"assessment round {round_idx}: no final answer")
            assessment = DiagnosisAssessment("undetermined", 1)
        else:
            diagnosis, confidence = parse_assessment_answer(outcome.text)
            if confidence is None:
                logger.warning("case %s: assessment lacked a confidence, assuming %d", case.case_id, FALLBACK_CONFIDENCE)
                confidence = FALLBACK_CONFIDENCE
            assessment = DiagnosisAssessment(diagnosis, min(10, max(1, confidence)))
        decision = runner.apply_assessment(assessment)
        if decision is not Decision.REQUEST_EXAM:
            break

        exam_name = (
            script["exam_requests"][exam_idx]
            if exam_idx < len(script["exam_requests"])
            else FALLBACK_EXAM
        )
        exam_idx += 1
        runner.request_exam(ExamRequest(exam_name))
        match = match_exam(exam_name, case, embed, cfg.match_threshold)
        result.exams_requested += 1
        if match.matched is not None:
            result.exams_ordered += 1
            result.exam_categories[match.category] = result.exam_categories.get(match.category, 0) + 1
            runner.ingest_exam_outcome(match.matched.content)
        else:
            result.exams_skipped += 1
            runner.ingest_exam_outcome(None)
        round_idx += 1
        _apply_scheduled(round_idx)

    final = runner.state.final_assessment
    result.final_diagnosis = final.diagnosis
    result.final_confidence = final.confidence
    result.final_decision = decision.value
    result.diagnosis_score = score_diagnosis(final.diagnosis, case.truth_diagnosis, embed)

    drug_grounding = knowledge.fetch_drug_grounding(final.diagnosis)
    try:
        meds = generate_medications(final, drug_grounding, backend, n=cfg.policy.medication_count)
        result.medication_count = len(meds)
    except GenerationMalformed as exc:
        result.medication_failed = True
        result.errors.append(f"medications: {exc}")
        meds = []
    runner.finalize(meds)

    result.report_revisions = runner.state.report_revisions
    result.results_ingested = runner.state.results_ingested
    if case.truth_specialty:
        if result.referrals:
            result.first_referral_correct = result.referrals[0] == case.truth_specialty
            result.final_referral_correct = result.referrals[-1] == case.truth_specialty
        else:
            result.first_referral_correct = False
            result.final_referral_correct = False


# --- aggregation -----------------------------------------------------------------


def _mean(xs: list[float]) -> float:
    return round(statistics.fmean(xs), 6) if xs else 0.0


def aggregate(results: list[CaseResult], cfg: BenchmarkConfig, duration: str) -> dict:
    results = sorted(results, key=lambda r: r.case_id)
    by_specialty: dict[str, list[CaseResult]] = {}
    for r in results:
        by_specialty.setdefault(r.specialty, []).append(r)

    categories: dict[str, int] = {}
    med_distribution: dict[str, int] = {}
    for r in results:
        for cat, n in r.exam_categories.items():
            categories[cat] = categories.get(cat, 0) + n
        med_distribution[str(r.medication_count)] = med_distribution.get(str(r.medication_count), 0) + 1

    with_truth = [r for r in results if r.first_referral_correct is not None]
    referred = [r for r in results if r.referrals]
    return {
        "cases_total": len(results),
        "cases_errored": sum(1 for r in results if r.errors and not r.final_diagnosis),
        "specialties": {s: len(rs) for s, rs in sorted(by_specialty.items())},
        "diagnosis": {
            "mean_score": _mean([r.diagnosis_score for r in results]),
            "mean_score_by_specialty": {
                s: _mean([r.diagnosis_score for r in rs]) for s, rs in sorted(by_specialty.items())
            },
            "accepted": sum(1 for r in results if r.final_decision == Decision.ACCEPT_DIAGNOSIS.value),
            "forced_final": sum(1 for r in results if r.final_decision == Decision.FORCED_FINAL.value),
        },
        "exams": {
            "requested": sum(r.exams_requested for r in results),
            "ordered": sum(r.exams_ordered for r in results),
            "skipped_unmatched": sum(r.exams_skipped for r in results),
            "categories": dict(sorted(categories.items())),
            "category_rules_version": CATEGORY_RULES_VERSION,
        },
        "reports": {
            "revisions_total": sum(r.report_revisions for r in results),
            "mean_revisions_per_case": _mean([float(r.report_revisions) for r in results]),
            "results_ingested_total": sum(r.results_ingested for r in results),
        },
        "referrals": {
            "cases_referred": len(referred),
            "referrals_total": sum(len(r.referrals) for r in results),
            "double_referrals": sum(1 for r in results if len(r.referrals) >= 2),
            "failures": sum(r.referral_failures for r in results),
            "first_pass_accuracy": _mean(
                [1.0 if r.first_referral_correct else 0.0 for r in with_truth]
            ),
            "final_accuracy": _mean(
                [1.0 if r.final_referral_correct else 0.0 for r in with_truth]
            ),
        },
        "medications": {
            "distribution": dict(sorted(med_distribution.items())),
            "failures": sum(1 for r in results if r.medication_failed),
            "recommendations_total": sum(r.medication_count for r in results),
        },
        "config": {
            "exam_budget": cfg.policy.exam_budget,
            "confidence_accept_threshold": cfg.policy.confidence_accept_threshold,
            "medication_count": cfg.policy.medication_count,
            "match_threshold": cfg.match_threshold,
            "offline": cfg.offline,
        },
        "generated_at": duration,
    }


def _metrics_md(metrics: dict) -> str:
    d, e, rf, m = metrics["diagnosis"], metrics["exams"], metrics["referrals"], metrics["medications"]
    lines = [
        "# Benchmark Metrics",
        "",
        f"- Cases: {metrics['cases_total']} across {len(metrics['specialties'])} specialties",
        f"- Mean diagnosis score: {d['mean_score']}",
        f"- Decisions: {d['accepted']} accepted, {d['forced_final']} forced final",
        f"- Exams: {e['requested']} requested, {e['ordered']} ordered, "
        f"{e['skipped_unmatched']} skipped (no matching result)",
        f"- Reports: {metrics['reports']['revisions_total']} revisions "
        f"({metrics['reports']['mean_revisions_per_case']} per case)",
        f"- Referrals: {rf['referrals_total']} across {rf['cases_referred']} cases, "
        f"{rf['double_referrals']} double, {rf['failures']} failures, "
        f"first-pass accuracy {rf['first_pass_accuracy']}, final {rf['final_accuracy']}",
        f"- Medications: distribution {m['distribution']}, {m['failures']} failures",
        "",
        "## Mean diagnosis score by specialty",
        "",
        "| Specialty | Cases | Mean score |",
        "|---|---|---|",
    ]
    for s, score in d["mean_score_by_specialty"].items():
        lines.append(f"| {s} | {metrics['specialties'][s]} | {score} |")
    return "\n".join(lines) + "\n"


def _write_plots(metrics: dict, out_dir: Path) -> None:
    from .plots import bar_chart_svg

    plots = out_dir / "plots"
    plots.mkdir(exist_ok=True)
    by_spec = metrics["diagnosis"]["mean_score_by_specialty"]
    (plots / "scores_by_specialty.svg").write_text(
        bar_chart_svg("Mean diagnosis score by specialty", list(by_spec), list(by_spec.values())),
        encoding="utf-8",
    )
    cats = metrics["exams"]["categories"]
    (plots / "exam_categories.svg").write_text(
        bar_chart_svg(
            "Ordered examinations by category",
            list(cats) or ["(none)"],
            [float(v) for v in cats.values()] or [0.0],
        ),
        encoding="utf-8",
    )


def run_benchmark(cfg: BenchmarkConfig) -> dict:
    """Run every case in the dataset and write metrics + plots to ``out_dir``."""
    cases = load_dataset(cfg.dataset_dir)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()

    def _one(case: CaseSpec) -> CaseResult:
        return run_case(case, cfg, out_dir / "cases" / case.case_id)

    if cfg.workers == 1:
        results = [_one(c) for c in cases]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_one, cases))

    # Offline scripted runs are fully deterministic, so the timestamp is
    # pinned; live runs record wall-clock duration.
    duration = "deterministic" if cfg.offline and cfg.backend_factory is None else f"{time.time() - started:.1f}s"
    metrics = aggregate(results, cfg, duration)
    (out_dir / "metrics.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "metrics.md").write_text(_metrics_md(metrics), encoding="utf-8")
    failures = [
        {"case_id": r.case_id, "errors": r.errors}
        for r in sorted(results, key=lambda r: r.case_id)
        if r.errors
    ]
    (out_dir / "failures.json").write_text(
        json.dumps(failures, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_plots(metrics, out_dir)
    return metrics
