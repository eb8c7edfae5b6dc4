"""Operator command line.

Subcommands mirror the HTTP endpoints one-to-one and drive the same
workflow engine, so a CLI-driven episode and an API-driven episode leave
identical store state. Configuration comes from ``medos.json`` in the
working directory (or ``--config``), with sensible offline defaults.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__, documents as docs, viewer as viewer_mod
from .documents import DiagnosisAssessment, MedicationRecommendation, ReferralReport
from .errors import MedicalOSError
from .gateway import HttpChatBackend, ScriptedChatBackend
from .grounding import KnowledgeClient, extract_key_terms
from .store import DocKind, StoreLayout, init_store
from .workflow import EpisodeRunner, ExamRequest, WorkflowPolicy

PENDING_MEDS_FILE = "pending_meds.json"

DEFAULT_CONFIG = {
    "store_root": "medos-store",
    "offline": True,
    "attended": False,
    "cache_dir": "medos-cache",
    "policy": {},
    "llm": {},
    "script_fixture": None,
}


def load_config(path: str | None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    file = Path(path) if path else Path("medos.json")
    if file.is_file():
        cfg.update(json.loads(file.read_text(encoding="utf-8")))
    elif path:
        raise click.ClickException(f"config file not found: {path}")
    return cfg


def _policy(cfg: dict) -> WorkflowPolicy:
    return WorkflowPolicy(**cfg.get("policy", {}))


def _chat_backend(cfg: dict):
    if cfg.get("script_fixture"):
        return ScriptedChatBackend.from_fixture_file(cfg["script_fixture"])
    llm = cfg.get("llm", {})
    if llm.get("base_url"):
        return HttpChatBackend(base_url=llm["base_url"], model=llm.get("model", "default"),
                               api_key=llm.get("api_key"))
    return ScriptedChatBackend([], strict=False, default_response="")


def _knowledge(cfg: dict) -> KnowledgeClient:
    return KnowledgeClient(cfg["cache_dir"], offline=bool(cfg.get("offline", True)))


def _store(cfg: dict):
    return init_store(cfg["store_root"])


def _runner(cfg: dict, patient_id: str) -> EpisodeRunner:
    return EpisodeRunner.resume(_store(cfg), patient_id, _policy(cfg), _chat_backend(cfg), _knowledge(cfg))


def _echo_json(data) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


def _require_approval(cfg: dict, approved_by: str | None, what: str) -> None:
    if cfg.get("attended") and not approved_by:
        raise click.ClickException(f"attended mode: {what} requires --approved-by")


def _parse_meds(raw: list[dict], limit: int) -> list[MedicationRecommendation]:
    meds = [
        MedicationRecommendation(
            brand_name=m.get("brand_name", ""),
            generic_name=m["generic_name"],
            dosage=m["dosage"],
            frequency=m["frequency"],
            duration=m["duration"],
            cautions=tuple(m.get("cautions", [])),
            side_effects=tuple(m.get("side_effects", [])),
            patient_considerations=m.get("patient_considerations", ""),
            source=m.get("source", docs.UNVERIFIED_SOURCE),
        )
        for m in raw
    ]
    return meds[:limit]


@click.group()
@click.version_option(__version__, prog_name="medos")
@click.option("--config", "config_path", default=None, help="Path to medos.json.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Clinical agent workflow operator commands."""
    ctx.obj = load_config(config_path)


@main.command()
@click.option("--root", default=None, help="Store root directory (defaults to config).")
@click.pass_obj
def init(cfg: dict, root: str | None) -> None:
    """Initialize (or re-open) the record store."""
    store = init_store(root or cfg["store_root"], StoreLayout())
    _echo_json({"root": str(store.root), "specialties": list(store.layout.specialties)})


@main.command()
@click.argument("patient_id")
@click.option("--demographics", required=True, help="Demographic summary for the history file.")
@click.pass_obj
def admit(cfg: dict, patient_id: str, demographics: str) -> None:
    """Admit a patient and open a workflow episode."""
    runner = EpisodeRunner(_store(cfg), _policy(cfg), _chat_backend(cfg), _knowledge(cfg))
    state = runner.start_episode(patient_id, demographics=demographics)
    _echo_json({"patient_id": patient_id, "stage": state.stage.value})


@main.command()
@click.argument("patient_id")
@click.option("--text", default=None, help="Inquiry transcript text.")
@click.option("--file", "file_", type=click.Path(exists=True), default=None,
              help="Read the transcript from a file.")
@click.pass_obj
def inquire(cfg: dict, patient_id: str, text: str | None, file_: str | None) -> None:
    """Record the patient inquiry transcript."""
    if (text is None) == (file_ is None):
        raise click.ClickException("provide exactly one of --text or --file")
    transcript = text if text is not None else Path(file_).read_text(encoding="utf-8")
    state = _runner(cfg, patient_id).record_inquiry(transcript)
    _echo_json({"patient_id": patient_id, "stage": state.stage.value})


@main.command()
@click.argument("patient_id")
@click.pass_obj
def report(cfg: dict, patient_id: str) -> None:
    """Generate the initial structured report from stored documents."""
    runner = _runner(cfg, patient_id)
    store = runner.store
    folder = next(f for f in store.find_patient(patient_id) if f.patient_id == patient_id)
    inputs = [
        store.read_document(patient_id, d.filename)
        for d in folder.documents
        if d.doc_kind in (DocKind.TRANSCRIPT, DocKind.HISTORY)
    ]
    grounding = []
    transcripts = [d for d in folder.documents if d.doc_kind is DocKind.TRANSCRIPT]
    if transcripts:
        transcript = store.read_document(patient_id, transcripts[-1].filename)
        for term in extract_key_terms(transcript, runner.chat).terms:
            grounding.extend(runner.knowledge.fetch_grounding(term))
    generated = runner.generate_initial_report(inputs, grounding)
    click.echo(docs.render_report(generated))


@main.command()
@click.argument("patient_id")
@click.option("--diagnosis", required=True)
@click.option("--confidence", required=True, type=click.IntRange(1, 10))
@click.pass_obj
def assess(cfg: dict, patient_id: str, diagnosis: str, confidence: int) -> None:
    """Apply a diagnostic assessment and print the gating decision."""
    runner = _runner(cfg, patient_id)
    decision = runner.apply_assessment(DiagnosisAssessment(diagnosis, confidence))
    _echo_json({
        "decision": decision.value,
        "exams_used": runner.state.exams_used,
        "exam_budget": runner.state.exam_budget,
    })


@main.command()
@click.argument("patient_id")
@click.option("--name", default=None, help="Request an exam by name.")
@click.option("--result", default=None, help="Ingest the outstanding exam's result text.")
@click.option("--unavailable", is_flag=True, help="Record the outstanding exam as unavailable.")
@click.pass_obj
def exam(cfg: dict, patient_id: str, name: str | None, result: str | None, unavailable: bool) -> None:
    """Request an exam, or ingest the outstanding request's outcome."""
    runner = _runner(cfg, patient_id)
    if name is not None:
        state = runner.request_exam(ExamRequest(name))
        _echo_json({"pending_exam": name, "stage": state.stage.value})
    elif result is not None or unavailable:
        runner.ingest_exam_outcome(None if unavailable else result)
        _echo_json({
            "exams_used": runner.state.exams_used,
            "report_revisions": runner.state.report_revisions,
        })
    else:
        raise click.ClickException("provide --name, --result, or --unavailable")


@main.command()
@click.argument("patient_id")
@click.option("--to", "recommended", required=True, help="Target specialty.")
@click.option("--rationale", default="Referral entered by operator.")
@click.option("--approved-by", default=None)
@click.pass_obj
def refer(cfg: dict, patient_id: str, recommended: str, rationale: str, approved_by: str | None) -> None:
    """Refer the case to another specialty."""
    _require_approval(cfg, approved_by, "referral")
    runner = _runner(cfg, patient_id)
    referral = ReferralReport(
        current_specialty=runner.current_specialty,
        recommended_specialty=recommended,
        rationale=rationale,
        clinical_summary="",
        points_for_attention=("Review current report.",),
    )
    state = runner.apply_referral(referral)
    _echo_json({"specialty": state.specialty, "stage": state.stage.value})


@main.command()
@click.argument("patient_id")
@click.option("--meds-file", type=click.Path(exists=True), required=True,
              help="JSON list of medication recommendations.")
@click.option("--approved-by", default=None)
@click.pass_obj
def medicate(cfg: dict, patient_id: str, meds_file: str, approved_by: str | None) -> None:
    """Stage a medication plan for discharge and print it."""
    _require_approval(cfg, approved_by, "medication planning")
    runner = _runner(cfg, patient_id)
    if runner.state.final_assessment is None:
        raise click.ClickException("medication planning requires a final assessment")
    raw = json.loads(Path(meds_file).read_text(encoding="utf-8"))
    meds = _parse_meds(raw, _policy(cfg).medication_count)
    folder = runner.store._folder_path(patient_id)
    (folder / PENDING_MEDS_FILE).write_text(json.dumps(raw, indent=2), encoding="utf-8")
    click.echo(docs.render_medication_plan(runner.state.final_assessment.diagnosis, meds))


@main.command()
@click.argument("patient_id")
@click.option("--approved-by", default=None)
@click.pass_obj
def discharge(cfg: dict, patient_id: str, approved_by: str | None) -> None:
    """Finalize the episode: write the medication plan and return the folder."""
    _require_approval(cfg, approved_by, "discharge")
    runner = _runner(cfg, patient_id)
    meds = []
    folder = runner.store._folder_path(patient_id)
    pending = folder / PENDING_MEDS_FILE if folder else None
    if pending is not None and pending.is_file():
        raw = json.loads(pending.read_text(encoding="utf-8"))
        meds = _parse_meds(raw, _policy(cfg).medication_count)
        pending.unlink()
    state = runner.finalize(meds)
    _echo_json({"stage": state.stage.value, "final_diagnosis": state.final_assessment.diagnosis})


@main.command()
@click.argument("query")
@click.option("--scope", type=click.Choice(["all", "patient", "specialty"]), default="all")
@click.option("--arg", default=None, help="Patient id or specialty name for scoped search.")
@click.option("--limit", type=int, default=10)
@click.pass_obj
def search(cfg: dict, query: str, scope: str, arg: str | None, limit: int) -> None:
    """Keyword search across stored documents."""
    hits = _store(cfg).search_keyword(query, scope=(scope, arg), limit=limit)
    _echo_json([
        {
            "patient_id": h.doc.patient_id,
            "filename": h.doc.filename,
            "score": h.score,
            "lines": [{"line": n, "text": t} for n, t in h.line_hits],
        }
        for h in hits
    ])


@main.command()
@click.argument("patient_id")
@click.argument("filename")
@click.option("--height", type=int, default=20)
@click.option("--find", "keyword", default=None, help="Jump to the first occurrence.")
@click.pass_obj
def view(cfg: dict, patient_id: str, filename: str, height: int, keyword: str | None) -> None:
    """Show a document through the viewport viewer."""
    content = _store(cfg).read_document(patient_id, filename)
    state = viewer_mod.open_document(content, height)
    if keyword:
        jumped = viewer_mod.goto_first(state, keyword)
        if jumped is None:
            raise click.ClickException(f"{keyword!r} not found")
        state = jumped
    top = state.top_line
    for offset, line in enumerate(state.lines[top - 1 : top - 1 + state.height]):
        marker = ">" if top + offset == state.cursor_line else " "
        click.echo(f"{marker} {top + offset:>5} {line}")


@main.command()
@click.option("--dataset", type=click.Path(exists=True), default=None,
              help="Case directory (defaults to the bundled 30-case fixture set).")
@click.option("--out", required=True, type=click.Path(), help="Output directory for metrics.")
@click.option("--workers", type=int, default=4)
@click.pass_obj
def bench(cfg: dict, dataset: str | None, out: str, workers: int) -> None:
    """Run the offline benchmark and write metrics, plots, and per-case artifacts."""
    from .harness import BenchmarkConfig, bundled_fixture_dir, run_benchmark

    metrics = run_benchmark(
        BenchmarkConfig(
            dataset_dir=dataset or bundled_fixture_dir(),
            out_dir=out,
            workers=workers,
            offline=bool(cfg.get("offline", True)),
            policy=_policy(cfg),
        )
    )
    _echo_json(metrics)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8077)
@click.option("--attended", is_flag=True, help="Require approved_by on human-gated transitions.")
@click.option("--token", default=None, envvar="MEDOS_API_TOKEN", help="Shared bearer token.")
@click.option("--ui-dir", type=click.Path(), default=None, help="Static console assets to mount at /ui.")
@click.pass_obj
def serve(cfg: dict, host: str, port: int, attended: bool, token: str | None, ui_dir: str | None) -> None:
    """Start the HTTP service."""
    from .api import create_app, serve as run_service

    app = create_app(
        cfg["store_root"],
        policy=_policy(cfg),
        chat_backend=_chat_backend(cfg),
        knowledge=_knowledge(cfg),
        attended=attended or bool(cfg.get("attended")),
        token=token,
        mode="offline" if cfg.get("offline", True) else "live",
        ui_dir=ui_dir,
    )
    run_service(app, host=host, port=port)


def entrypoint() -> None:  # console-script shim with domain-error formatting
    try:
        main(standalone_mode=True)
    except MedicalOSError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
