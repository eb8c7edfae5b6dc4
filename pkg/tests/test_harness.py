"""Benchmark pipeline tests: case loading, exam matching, patient actor
isolation, and end-to-end deterministic metric runs."""

import hashlib
import json
from pathlib import Path

import pytest

from medicalos.errors import SchemaViolation
from medicalos.gateway import ScriptedChatBackend, ScriptEntry, TrigramEmbeddingBackend
from medicalos.harness import (
    BenchmarkConfig,
    bundled_fixture_dir,
    categorize_exam,
    load_dataset,
    match_exam,
    run_benchmark,
    score_diagnosis,
    simulate_patient_turn,
)
from medicalos.harness.cases import convert_agentclinic_case
from medicalos.harness.patient import PATIENT_PERSONA_PREFIX
from medicalos.harness.scripting import parse_assessment_answer

GOLDEN_METRICS = Path(__file__).parent / "data" / "golden_metrics.json"


# --- case loading ------------------------------------------------------------


def test_bundled_dataset_loads():
    cases = load_dataset(bundled_fixture_dir())
    assert len(cases) == 30
    assert len({c.specialty for c in cases}) == 6
    assert len({c.case_id for c in cases}) == 30


def test_schema_violations_are_aggregated(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"case_id": "a"}))
    (tmp_path / "b.json").write_text("{not json")
    with pytest.raises(SchemaViolation) as exc:
        load_dataset(tmp_path)
    text = "\n".join(exc.value.violations)
    assert "truth_diagnosis" in text
    assert "invalid JSON" in text


def test_duplicate_case_id_rejected(tmp_path):
    case = json.loads((bundled_fixture_dir() / "case-pulm-01.json").read_text())
    (tmp_path / "x.json").write_text(json.dumps(case))
    (tmp_path / "y.json").write_text(json.dumps(case))
    with pytest.raises(SchemaViolation, match="duplicate case_id"):
        load_dataset(tmp_path)


def test_convert_external_osce_shape():
    raw = {
        "OSCE_Examination": {
            "Patient_Actor": {"Demographics": "34yo", "Symptoms": "cough", "History": "smoker"},
            "Physical_Examination_Findings": {"Vitals": {"Temperature": "38C"}},
            "Test_Results": {"Chest_X-Ray": "infiltrate"},
            "Correct_Diagnosis": "Pneumonia",
            "Specialist": "Pulmonology",
        }
    }
    data = convert_agentclinic_case(raw, "ext-1")
    assert data["truth_diagnosis"] == "Pneumonia"
    assert {"name": "Vitals Temperature", "content": "38C"} in data["physical_findings"]
    assert data["test_results"] == [{"name": "Chest_X-Ray", "content": "infiltrate"}]


# --- categorization and matching ------------------------------------------------


@pytest.mark.parametrize(
    "name,category",
    [
        ("chest X-ray", "Imaging"),
        ("abdominal CT scan", "Imaging"),
        ("skin biopsy", "Laboratory"),
        ("complete blood count", "Laboratory"),
        ("vital signs", "PhysicalExam"),
        ("sleep study", "Other"),
    ],
)
def test_categorize_exam(name, category):
    assert categorize_exam(name) == category


def test_categorize_imaging_wins_over_laboratory():
    # ordered rules: an imaging keyword beats a later laboratory keyword
    assert categorize_exam("CT-guided biopsy") == "Imaging"


def test_match_exam_exact_name_and_miss():
    cases = load_dataset(bundled_fixture_dir())
    case = next(c for c in cases if c.case_id == "case-pulm-01")
    embed = TrigramEmbeddingBackend()
    hit = match_exam("chest X-ray", case, embed)
    assert hit.matched is not None and hit.matched.name == "chest X-ray"
    assert hit.similarity == pytest.approx(1.0, abs=1e-9)
    miss = match_exam("zeta flux calibration probe", case, embed)
    assert miss.matched is None and miss.category is None


def test_score_diagnosis_identity_and_distance():
    embed = TrigramEmbeddingBackend()
    assert score_diagnosis("pneumonia", "pneumonia", embed) == pytest.approx(1.0, abs=1e-9)
    assert score_diagnosis("qqqq wxyz", "pneumonia", embed) < 0.3


def test_parse_assessment_answer():
    d, c = parse_assessment_answer("diagnosis: stable angina; confidence: 8")
    assert (d, c) == ("stable angina", 8)
    d, c = parse_assessment_answer("probably angina")
    assert c is None and d == "probably angina"


# --- patient actor firewall ------------------------------------------------------


def test_patient_prompt_contains_only_the_actor_profile():
    cases = load_dataset(bundled_fixture_dir())
    case = cases[0]
    captured = []
    backend = ScriptedChatBackend([ScriptEntry("regex", ".", "I have a cough.")])
    backend.on_request = lambda msgs: captured.append(msgs[-1].content)
    answer = simulate_patient_turn(case, "What brings you in?", backend)
    assert answer == "I have a cough."
    (prompt,) = captured
    assert prompt.startswith(PATIENT_PERSONA_PREFIX)
    assert case.actor_profile in prompt
    assert case.truth_diagnosis not in prompt
    for item in case.available_items():
        assert item.content not in prompt


# --- end-to-end benchmark ---------------------------------------------------------


@pytest.fixture(scope="module")
def benchmark_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    metrics = run_benchmark(BenchmarkConfig(dataset_dir=bundled_fixture_dir(), out_dir=out, workers=4))
    return out, metrics


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        # the store journal logs unique per-operation move ids by design
        if p.is_file() and p.name != "store.journal":
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_benchmark_matches_golden_metrics(benchmark_run):
    out, metrics = benchmark_run
    golden = json.loads(GOLDEN_METRICS.read_text())
    assert metrics == golden
    assert json.loads((out / "metrics.json").read_text()) == golden


def test_benchmark_is_bit_reproducible(benchmark_run, tmp_path):
    out, _ = benchmark_run
    run_benchmark(BenchmarkConfig(dataset_dir=bundled_fixture_dir(), out_dir=tmp_path, workers=1))
    assert _tree_digest(tmp_path) == _tree_digest(out)


def test_benchmark_exam_accounting(benchmark_run):
    out, metrics = benchmark_run
    exams = metrics["exams"]
    assert exams["ordered"] <= exams["requested"]
    assert exams["ordered"] + exams["skipped_unmatched"] == exams["requested"]
    assert sum(exams["categories"].values()) == exams["ordered"]


def test_benchmark_report_count_law_per_case(benchmark_run):
    out, _ = benchmark_run
    for result_file in sorted(out.glob("cases/*/result.json")):
        r = json.loads(result_file.read_text())
        assert r["report_revisions"] == 1 + r["results_ingested"], r["case_id"]
        assert r["exams_requested"] <= 4
        assert 0 <= r["medication_count"] <= 3


def test_benchmark_firewall_over_all_captured_prompts(benchmark_run):
    out, _ = benchmark_run
    cases = {c.case_id: c for c in load_dataset(bundled_fixture_dir())}
    checked = 0
    for prompts_file in sorted(out.glob("cases/*/prompts.jsonl")):
        case = cases[prompts_file.parent.name]
        for line in prompts_file.read_text().splitlines():
            rec = json.loads(line)
            if not rec["is_patient_persona"]:
                continue
            checked += 1
            assert case.truth_diagnosis not in rec["content"]
            for item in case.available_items():
                assert item.content not in rec["content"]
    assert checked == 30 * 3  # three inquiry questions per case


def test_benchmark_artifacts_exist(benchmark_run):
    out, _ = benchmark_run
    for name in ("metrics.json", "metrics.md", "failures.json",
                 "plots/scores_by_specialty.svg", "plots/exam_categories.svg"):
        assert (out / name).is_file(), name
    failures = json.loads((out / "failures.json").read_text())
    assert {f["case_id"] for f in failures} == {"case-derm-05", "case-neuro-05"}


def test_benchmark_episode_folders_discharged(benchmark_run):
    out, _ = benchmark_run
    for store_dir in sorted(out.glob("cases/*/store")):
        case_id = store_dir.parent.name
        episode = store_dir / "Patient" / case_id / "episode.json"
        assert episode.is_file(), case_id
        state = json.loads(episode.read_text())
        assert state["stage"] == "Discharged"
        assert state["exams_used"] <= state["exam_budget"]
