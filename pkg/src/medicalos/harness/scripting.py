"""Build a deterministic scripted chat backend for one benchmark case.

The case's ``script`` block declares the canned clinical decisions
(patient answers, key terms, per-round assessments, exam requests,
referral targets, medication count). This module turns those into replay
entries keyed to the distinctive wording of each workflow prompt, and
renders the canonical report/referral/medication drafts the scripted
"model" returns, so a full episode runs bit-reproducibly offline.

Script schema (all fields optional, defaults in ``DEFAULTS``)::

    {
      "patient_answers":  ["...", "...", "..."],   # one per inquiry question
      "key_terms":        "cough; fever",
      "assessments":      [{"diagnosis": "...", "confidence": 5}, ...],
      "exam_requests":    ["chest X-ray", ...],
      "referrals":        [{"after_round": 0, "recommended": "Pulmonology",
                            "invalid": false}],
      "medications":      3,                        # 0 = scripted generation failure
      "use_tool_in_assessment": false
    }
"""

from __future__ import annotations

import re

from ..documents import PLACEHOLDER, SECTION_KEYS
from ..gateway import ScriptEntry, ScriptedChatBackend
from ..workflow import PRIMARY_CARE
from .cases import CaseSpec

INQUIRY_QUESTIONS = (
    "What brings you in today, and what symptoms are you experiencing?",
    "How long has this been going on, and has it changed over time?",
    "Is there anything else about your health or daily life I should know?",
)

ASSESSMENT_GOAL_MARKER = "assessment round"

DEFAULT_ANSWER = "I've been feeling unwell; it's hard to describe beyond my profile."

MED_TEMPLATES = (
    ("Brandex", "500 mg", "every 12 hours", "7 days"),
    ("Genrelief", "650 mg", "every 6 hours as needed", "5 days"),
    ("Calmora", "20 mg", "once daily", "10 days"),
)


def assessment_goal(round_idx: int, revision: int, report_text: str) -> str:
    return (
        f"Provide a diagnostic assessment ({ASSESSMENT_GOAL_MARKER} {round_idx}, "
        f"report revision {revision}). End with "
        "'Final Answer: diagnosis: <text>; confidence: <1-10>'.\n\n"
        f"Current report:\n{report_text}"
    )


def parse_assessment_answer(text: str) -> tuple[str, int | None]:
    """Parse 'diagnosis: <text>; confidence: <int>' from a final answer."""
    diag_m = re.search(r"diagnosis:\s*(.+?)(?:;|$)", text, re.IGNORECASE)
    conf_m = re.search(r"confidence:\s*(\d+)", text, re.IGNORECASE)
    diagnosis = diag_m.group(1).strip() if diag_m else text.strip()
    confidence = int(conf_m.group(1)) if conf_m else None
    return diagnosis, confidence


def initial_report_markdown(case: CaseSpec, diagnosis: str, confidence: int) -> str:
    sections = {
        "Patient Identification": f"Case {case.case_id}. {case.actor_profile.splitlines()[0][:200]}",
        "Medical History": case.history or PLACEHOLDER,
        "Physical Examination Findings": PLACEHOLDER,
        "Test Results": PLACEHOLDER,
        "Treatment Plan": "Pending diagnostic work-up.",
        "Progress Notes": "Initial inquiry completed; report drafted.",
        "Discharge Summary": PLACEHOLDER,
    }
    return _render_draft(diagnosis, confidence, sections)


def updated_report_markdown(
    case: CaseSpec,
    diagnosis: str,
    confidence: int,
    evidence: list[tuple[str, str]],
) -> str:
    findings = [f"{name}: {content}" for name, content in evidence if _is_physical(name)]
    results = [f"{name}: {content}" for name, content in evidence if not _is_physical(name)]
    sections = {
        "Patient Identification": f"Case {case.case_id}. {case.actor_profile.splitlines()[0][:200]}",
        "Medical History": case.history or PLACEHOLDER,
        "Physical Examination Findings": "\n".join(findings) or PLACEHOLDER,
        "Test Results": "\n".join(results) or PLACEHOLDER,
        "Treatment Plan": f"Management directed at {diagnosis}.",
        "Progress Notes": f"Updated after {len(evidence)} examination(s).",
        "Discharge Summary": PLACEHOLDER,
    }
    return _render_draft(diagnosis, confidence, sections)


def _is_physical(name: str) -> bool:
    from .matching import CATEGORY_PHYSICAL, categorize_exam

    return categorize_exam(name) == CATEGORY_PHYSICAL


def _render_draft(diagnosis: str, confidence: int, sections: dict) -> str:
    lines = [f"Diagnosis: {diagnosis}", f"Confidence: {confidence}/10", ""]
    for key in SECTION_KEYS:
        lines += [f"## {key}", sections[key], ""]
    lines += ["## Sources", "None.", ""]
    return "\n".join(lines)


def referral_markdown(current: str, recommended: str) -> str:
    return "\n".join(
        [
            f"Current Specialty: {current}",
            f"Recommended Specialty: {recommended}",
            "## Rationale",
            f"Findings point to a condition managed by {recommended}.",
            "## Clinical Summary",
            "See current report for details.",
            "## Points for Attention",
            "- Review pending examination results.",
            "- Confirm medication tolerances before prescribing.",
        ]
    )


def medications_markdown(diagnosis: str, count: int) -> str:
    if count < 1:
        return "I am unable to provide medication recommendations for this case."
    blocks = []
    for i in range(1, count + 1):
        brand, dose, freq, dur = MED_TEMPLATES[(i - 1) % len(MED_TEMPLATES)]
        blocks.append(
            "\n".join(
                [
                    f"## Recommendation {i}",
                    f"Brand Name: {brand}",
                    f"Generic Name: {diagnosis.split()[0].lower()}-agent-{i}",
                    f"Dosage: {dose}",
                    f"Frequency: {freq}",
                    f"Duration: {dur}",
                    "Cautions: verify allergies; adjust for renal function",
                    "Side Effects: nausea; dizziness",
                    "Patient Considerations: take with food",
                    "Source: ",
                ]
            )
        )
    return "\n\n".join(blocks)


DEFAULTS = {
    "patient_answers": [],
    "key_terms": "",
    "assessments": [{"diagnosis": "unspecified condition", "confidence": 8}],
    "exam_requests": [],
    "referrals": [],
    "medications": 3,
    "use_tool_in_assessment": False,
}


def script_of(case: CaseSpec) -> dict:
    merged = dict(DEFAULTS)
    merged.update(case.script or {})
    return merged


def build_case_backend(case: CaseSpec) -> ScriptedChatBackend:
    """Replay backend covering every chat prompt one scripted episode makes."""
    script = script_of(case)
    entries: list[ScriptEntry] = []

    # Patient actor answers, keyed by the inquiry question text.
    answers = script["patient_answers"]
    for i, question in enumerate(INQUIRY_QUESTIONS):
        answer = answers[i] if i < len(answers) else DEFAULT_ANSWER
        entries.append(ScriptEntry("regex", re.escape(f"Clinician's question: {question}"), answer))

    # Key-term extraction.
    key_terms = script["key_terms"] or case.truth_diagnosis
    entries.append(ScriptEntry("regex", r"Extract up to three key medical terms", key_terms))

    assessments = script["assessments"]

    def assessment_at(i: int) -> dict:
        return assessments[min(i, len(assessments) - 1)]

    # Assessment rounds (react final answers), most specific first.
    for i in range(len(assessments) + 8):
        a = assessment_at(i)
        final = f"Final Answer: diagnosis: {a['diagnosis']}; confidence: {a['confidence']}"
        if i == 0 and script["use_tool_in_assessment"]:
            entries.append(
                ScriptEntry(
                    "regex",
                    rf"{ASSESSMENT_GOAL_MARKER} {i}\b",
                    'Thought: check prior cases\nAction: search_keyword\n```json\n{"query": "'
                    + case.truth_diagnosis.split()[0]
                    + '"}\n```',
                )
            )
            entries.append(ScriptEntry("regex", r"^Observation:", final))
        else:
            entries.append(ScriptEntry("regex", rf"{ASSESSMENT_GOAL_MARKER} {i}\b", final))

    # Initial report draft.
    a0 = assessment_at(0)
    entries.append(
        ScriptEntry(
            "regex",
            r"Write a structured medical report",
            initial_report_markdown(case, a0["diagnosis"], a0["confidence"]),
        )
    )

    # Update drafts, keyed by the evidence block marker of each exam request.
    available = {item.name: item.content for item in case.available_items()}
    evidence_so_far: list[tuple[str, str]] = []
    for i, exam_name in enumerate(script["exam_requests"]):
        # Mirror the runner's matching: the scripted draft assumes the exam
        # was fulfilled; unmatched requests never produce an update prompt.
        content = available.get(exam_name, f"Result for {exam_name}.")
        evidence_so_far = evidence_so_far + [(exam_name, content)]
        a = assessment_at(i + 1)
        entries.append(
            ScriptEntry(
                "regex",
                r"Update the medical report(?s:.*)" + re.escape(f"[{exam_name}]"),
                updated_report_markdown(case, a["diagnosis"], a["confidence"], evidence_so_far),
            )
        )

    # Referral decisions, keyed by the managing specialty at that point.
    current = PRIMARY_CARE
    for ref in script["referrals"]:
        md = referral_markdown(current, ref["recommended"])
        entries.append(ScriptEntry("regex", re.escape(f"currently managed by {current},"), md))
        if ref.get("invalid"):
            # The model "insists" on the unrecognized specialty at retry,
            # which surfaces as a referral failure in the metrics.
            entries.append(
                ScriptEntry(
                    "regex",
                    re.escape(f"'{ref['recommended']}' is not a recognized specialty"),
                    md,
                )
            )
        else:
            current = ref["recommended"]

    # Medication plan.
    entries.append(
        ScriptEntry(
            "regex",
            r"Recommend up to",
            medications_markdown(assessment_at(9)["diagnosis"], script["medications"]),
        )
    )

    return ScriptedChatBackend(entries, strict=True, backend_id=f"scripted:{case.case_id}")
