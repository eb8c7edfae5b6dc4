"""Benchmark case files: schema, loading, validation.

One JSON document per case. Physical findings and test results are gated:
the workflow only sees them after an explicit, successfully matched exam
request. An optional ``script`` block drives fully deterministic episodes
against the scripted chat backend (see ``scripting.py``).

A converter for the published AgentClinic-MedQA shape is stubbed in
``convert_agentclinic_case``; the dataset itself is not bundled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..errors import SchemaViolation

REQUIRED_FIELDS = (
    "case_id",
    "specialty",
    "actor_profile",
    "history",
    "physical_findings",
    "test_results",
    "truth_diagnosis",
)


@dataclass(frozen=True)
class NamedItem:
    name: str
    content: str


@dataclass(frozen=True)
class CaseSpec:
    case_id: str
    specialty: str
    actor_profile: str
    history: str
    physical_findings: tuple[NamedItem, ...]
    test_results: tuple[NamedItem, ...]
    truth_diagnosis: str
    truth_specialty: str = ""
    script: dict | None = None

    def available_items(self) -> tuple[NamedItem, ...]:
        return self.physical_findings + self.test_results


def _validate_case(data: dict, origin: str) -> list[str]:
    problems = []
    for key in REQUIRED_FIELDS:
        if key not in data or data[key] in (None, "", []):
            if key in ("physical_findings", "test_results") and data.get(key) == []:
                continue  # empty lists are legal: some cases have nothing to order
            problems.append(f"{origin}: missing or empty field '{key}'")
    for listfield in ("physical_findings", "test_results"):
        items = data.get(listfield) or []
        names = []
        for i, item in enumerate(items):
            if not isinstance(item, dict) or not item.get("name") or not item.get("content"):
                problems.append(f"{origin}: {listfield}[{i}] needs 'name' and 'content'")
            else:
                names.append(item["name"])
        if len(set(names)) != len(names):
            problems.append(f"{origin}: duplicate names in {listfield}")
    return problems


def _parse_case(data: dict) -> CaseSpec:
    return CaseSpec(
        case_id=data["case_id"],
        specialty=data["specialty"],
        actor_profile=data["actor_profile"],
        history=data["history"],
        physical_findings=tuple(NamedItem(i["name"], i["content"]) for i in data.get("physical_findings", [])),
        test_results=tuple(NamedItem(i["name"], i["content"]) for i in data.get("test_results", [])),
        truth_diagnosis=data["truth_diagnosis"],
        truth_specialty=data.get("truth_specialty", ""),
        script=data.get("script"),
    )


def load_dataset(path: str | Path) -> list[CaseSpec]:
    """Load and validate all ``*.json`` case files under ``path``."""
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not files:
        raise SchemaViolation([f"{path}: no case files found"])
    cases = []
    problems: list[str] = []
    for f in files:
        try:
            data = json.loads(f.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            problems.append(f"{f.name}: invalid JSON ({exc})")
            continue
        case_problems = _validate_case(data, data.get("case_id") or f.name)
        if case_problems:
            problems.extend(case_problems)
            continue
        cases.append(_parse_case(data))
    if problems:
        raise SchemaViolation(problems)
    seen = set()
    for case in cases:
        if case.case_id in seen:
            raise SchemaViolation([f"duplicate case_id {case.case_id}"])
        seen.add(case.case_id)
    return cases


def bundled_fixture_dir() -> Path:
    """The in-repo 30-case synthetic fixture set (6 specialties)."""
    return Path(str(resources.files("medicalos.harness").joinpath("fixtures/cases")))


def convert_agentclinic_case(raw: dict, case_id: str) -> dict:
    """Map one AgentClinic-MedQA-shaped record onto this schema.

    The published records carry an OSCE examination block with patient
    actor info, gated physical exams / test results, and the correct
    answer. This covers the common shape; callers should spot-check a
    sample before bulk conversion.
    """
    osce = raw.get("OSCE_Examination", raw)
    patient = osce.get("Patient_Actor", {})
    tests = osce.get("Test_Results", {}) or {}
    physical = osce.get("Physical_Examination_Findings", {}) or {}

    def _flatten(prefix: str, value) -> list[dict]:
        if isinstance(value, dict):
            out = []
            for key, sub in value.items():
                name = f"{prefix} {key}".strip() if prefix else str(key)
                out.extend(_flatten(name, sub))
            return out
        return [{"name": prefix, "content": str(value)}]

    return {
        "case_id": case_id,
        "specialty": osce.get("Specialist", ""),
        "actor_profile": json.dumps(
            {k: patient.get(k) for k in ("Demographics", "Symptoms", "History") if k in patient}
        ),
        "history": str(patient.get("Past_Medical_History", patient.get("History", ""))),
        "physical_findings": _flatten("", physical),
        "test_results": _flatten("", tests),
        "truth_diagnosis": osce.get("Correct_Diagnosis", ""),
        "truth_specialty": osce.get("Specialist", ""),
    }
