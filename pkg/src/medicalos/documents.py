"""Structured clinical documents: reports, update explanations, referrals,
and medication plans.

Generation composes grounded prompts against a chat backend; validation
and diffing are deterministic and LLM-free. The canonical on-disk grammar
is UTF-8 markdown with fixed ``## <Section Name>`` headings; see
``docs/report-format.md`` for the full grammar and a conformance corpus.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace

from .errors import EmptyInputs, GenerationMalformed, UnknownSpecialtyProposed
from .gateway import ChatMessage, ChatParams
from .grounding import GroundingDoc

logger = logging.getLogger(__name__)

SECTION_KEYS = (
    "Patient Identification",
    "Medical History",
    "Physical Examination Findings",
    "Test Results",
    "Treatment Plan",
    "Progress Notes",
    "Discharge Summary",
)
SOURCES_KEY = "Sources"
PLACEHOLDER = "Not available at this stage."

_HEADING_RE = re.compile(r"^## (.+?)\s*$", re.MULTILINE)
_META_RE = re.compile(r"^(Diagnosis|Confidence|Revision):\s*(.*)$", re.MULTILINE)


@dataclass(frozen=True)
class DiagnosisAssessment:
    diagnosis: str
    confidence: int  # 1..10; 1-4 vague, 5-6 moderate, 7-10 strong
    rationale: str = ""

    def __post_init__(self):
        if not self.diagnosis:
            raise ValueError("diagnosis must be non-empty")
        if not 1 <= self.confidence <= 10:
            raise ValueError(f"confidence {self.confidence} outside 1..10")


@dataclass(frozen=True)
class StructuredReport:
    sections: dict  # ordered: SECTION_KEYS -> nonempty text
    sources: tuple[str, ...]
    assessment: DiagnosisAssessment
    revision: int = 1


@dataclass(frozen=True)
class UpdateExplanation:
    prior_revision: int
    new_revision: int
    changed_sections: tuple[str, ...]
    triggering_evidence: tuple[str, ...]  # document names
    reasoning: str
    diagnosis_changed: bool


@dataclass(frozen=True)
class ReferralReport:
    current_specialty: str
    recommended_specialty: str
    rationale: str
    clinical_summary: str
    points_for_attention: tuple[str, ...]

    def __post_init__(self):
        if self.current_specialty == self.recommended_specialty:
            raise ValueError("referral target equals current specialty")
        if not self.points_for_attention:
            raise ValueError("points_for_attention must be non-empty")


@dataclass(frozen=True)
class MedicationRecommendation:
    brand_name: str
    generic_name: str
    dosage: str
    frequency: str
    duration: str
    cautions: tuple[str, ...]
    side_effects: tuple[str, ...]
    patient_considerations: str
    source: str

    def __post_init__(self):
        for name, value in (
            ("generic_name", self.generic_name),
            ("dosage", self.dosage),
            ("frequency", self.frequency),
            ("duration", self.duration),
            ("source", self.source),
        ):
            if not value:
                raise ValueError(f"{name} must be non-empty")


@dataclass(frozen=True)
class ValidationResult:
    report: StructuredReport | None
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


# --- serialization -----------------------------------------------------------


def render_report(report: StructuredReport) -> str:
    lines = [
        "# Medical Report",
        f"Diagnosis: {report.assessment.diagnosis}",
        f"Confidence: {report.assessment.confidence}/10",
        f"Revision: {report.revision}",
        "",
    ]
    for key in SECTION_KEYS:
        lines.append(f"## {key}")
        lines.append(report.sections[key].strip())
        lines.append("")
    lines.append(f"## {SOURCES_KEY}")
    if report.sources:
        lines.extend(f"- {s}" for s in report.sources)
    else:
        lines.append("None.")
    lines.append("")
    return "\n".join(lines)


def _split_sections(candidate: str) -> tuple[str, list[tuple[str, str]]]:
    """Split a markdown document into (preamble, [(heading, body), ...])."""
    matches = list(_HEADING_RE.finditer(candidate))
    preamble = candidate[: matches[0].start()] if matches else candidate
    out = []
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(candidate)
        out.append((m.group(1), candidate[m.end() : end].strip()))
    return preamble, out


def validate_report(candidate: str) -> ValidationResult:
    """Structural validation against the canonical grammar.

    Violation categories: missing section, wrong order, empty section,
    missing sources.
    """
    preamble, parsed = _split_sections(candidate)
    by_key = {}
    order = []
    for heading, body in parsed:
        if heading in SECTION_KEYS or heading == SOURCES_KEY:
            if heading not in by_key:
                by_key[heading] = body
                order.append(heading)

    violations = []
    for key in SECTION_KEYS:
        if key not in by_key:
            violations.append(f"missing section: {key}")
        elif not by_key[key]:
            violations.append(f"empty section: {key}")
    present_in_canonical = [k for k in order if k in SECTION_KEYS]
    expected = [k for k in SECTION_KEYS if k in by_key]
    if present_in_canonical != expected:
        violations.append("section order: sections out of canonical order")
    if SOURCES_KEY not in by_key:
        violations.append("missing sources: no Sources block")
    if violations:
        return ValidationResult(None, tuple(violations))

    meta = dict(_META_RE.findall(preamble))
    diagnosis = meta.get("Diagnosis", "").strip() or "Undetermined"
    confidence = _parse_confidence(meta.get("Confidence", ""))
    revision = _parse_int(meta.get("Revision", ""), default=1)
    sources = tuple(
        line.lstrip("- ").strip()
        for line in by_key[SOURCES_KEY].splitlines()
        if line.strip() and line.strip() != "None."
    )
    report = StructuredReport(
        sections={k: by_key[k] for k in SECTION_KEYS},
        sources=sources,
        assessment=DiagnosisAssessment(diagnosis, confidence),
        revision=max(1, revision),
    )
    return ValidationResult(report, ())


def _parse_confidence(raw: str) -> int:
    m = re.search(r"\d+", raw)
    if not m:
        return 5  # mid-band default when the header is absent
    return min(10, max(1, int(m.group())))


def _parse_int(raw: str, default: int) -> int:
    m = re.search(r"\d+", raw)
    return int(m.group()) if m else default


def diff_sections(prior: StructuredReport, new: StructuredReport) -> tuple[str, ...]:
    """Independent text diff of the two revisions' sections."""
    return tuple(
        key
        for key in SECTION_KEYS
        if prior.sections[key].strip() != new.sections[key].strip()
    )


# --- generation ---------------------------------------------------------------

_REPORT_GRAMMAR_HINT = (
    "Produce a markdown medical report with EXACTLY these headings, in this "
    "order, each followed by content (write '" + PLACEHOLDER + "' when no "
    "data exists yet):\n"
    + "\n".join(f"## {k}" for k in SECTION_KEYS)
    + "\nStart the document with these header lines:\n"
    "Diagnosis: <most likely diagnosis>\nConfidence: <integer 1-10>/10\n"
    "Do not add any other top-level headings."
)


def _grounding_block(grounding: list[GroundingDoc]) -> str:
    if not grounding:
        return ""
    parts = ["Reference material:"]
    for doc in grounding:
        parts.append(f"- {doc.provenance_line()}\n  {doc.excerpt}")
    return "\n".join(parts)


def generate_report(inputs: list[str], grounding: list[GroundingDoc], chat_backend) -> StructuredReport:
    """Generate a revision-1 report from document contents plus grounding."""
    if not inputs or all(not x.strip() for x in inputs):
        raise EmptyInputs("no input documents supplied")
    prompt = (
        "Write a structured medical report from the patient documents below.\n"
        f"{_REPORT_GRAMMAR_HINT}\n\n{_grounding_block(grounding)}\n\n"
        "Patient documents:\n" + "\n---\n".join(inputs)
    )
    report = _generate_valid_report(prompt, chat_backend)
    # Provenance is recorded deterministically from the supplied grounding,
    # never trusted from the model.
    return replace(
        report,
        revision=1,
        sources=tuple(doc.provenance_line() for doc in grounding),
    )


def _generate_valid_report(prompt: str, chat_backend) -> StructuredReport:
    draft = chat_backend.chat([ChatMessage("user", prompt)], ChatParams()).text
    result = validate_report(draft)
    if result.ok:
        return result.report
    repair = (
        "Your previous report was malformed: "
        + "; ".join(result.violations)
        + "\nRegenerate it following the grammar exactly.\n\n"
        + prompt
    )
    draft = chat_backend.chat([ChatMessage("user", repair)], ChatParams()).text
    result = validate_report(draft)
    if not result.ok:
        raise GenerationMalformed("; ".join(result.violations))
    return result.report


def update_report(
    prior: StructuredReport,
    new_evidence: list[tuple[str, str]],
    grounding: list[GroundingDoc],
    chat_backend,
) -> tuple[StructuredReport, UpdateExplanation]:
    """Revise a report with new evidence; the explanation's changed-section
    list comes from a deterministic diff, not from the model."""
    if not new_evidence:
        raise EmptyInputs("no new evidence supplied")
    evidence_block = "\n---\n".join(f"[{name}]\n{content}" for name, content in new_evidence)
    prompt = (
        "Update the medical report below by integrating the new evidence. "
        "Keep unchanged sections verbatim.\n"
        f"{_REPORT_GRAMMAR_HINT}\n\n{_grounding_block(grounding)}\n\n"
        f"Current report:\n{render_report(prior)}\n\nNew evidence:\n{evidence_block}"
    )
    updated = _generate_valid_report(prompt, chat_backend)
    sources = tuple(dict.fromkeys(prior.sources + tuple(d.provenance_line() for d in grounding)))
    updated = replace(updated, revision=prior.revision + 1, sources=sources)

    changed = diff_sections(prior, updated)
    diagnosis_changed = prior.assessment.diagnosis.strip() != updated.assessment.diagnosis.strip()
    reasoning_bits = []
    if changed:
        reasoning_bits.append("Sections revised after new evidence: " + ", ".join(changed) + ".")
    else:
        reasoning_bits.append("New evidence reviewed; no section content changed.")
    if diagnosis_changed:
        reasoning_bits.append(
            f"Working diagnosis revised from '{prior.assessment.diagnosis}' "
            f"to '{updated.assessment.diagnosis}'."
        )
    reasoning_bits.append("Triggering evidence: " + ", ".join(name for name, _ in new_evidence) + ".")
    explanation = UpdateExplanation(
        prior_revision=prior.revision,
        new_revision=updated.revision,
        changed_sections=changed,
        triggering_evidence=tuple(name for name, _ in new_evidence),
        reasoning=" ".join(reasoning_bits),
        diagnosis_changed=diagnosis_changed,
    )
    return updated, explanation


def render_explanation(exp: UpdateExplanation) -> str:
    return "\n".join(
        [
            "# Report Update Explanation",
            f"Prior Revision: {exp.prior_revision}",
            f"New Revision: {exp.new_revision}",
            f"Diagnosis Changed: {'yes' if exp.diagnosis_changed else 'no'}",
            "Changed Sections: " + ("; ".join(exp.changed_sections) or "None"),
            "Triggering Evidence: " + ("; ".join(exp.triggering_evidence) or "None"),
            "",
            "## Reasoning",
            exp.reasoning,
            "",
        ]
    )


# --- referral -----------------------------------------------------------------

_REFERRAL_GRAMMAR_HINT = (
    "Reply in markdown with exactly this shape:\n"
    "Current Specialty: <name>\nRecommended Specialty: <name>\n"
    "## Rationale\n<text>\n## Clinical Summary\n<text>\n"
    "## Points for Attention\n- <bullet>\n- <bullet>\n"
    "If no referral is needed, set Recommended Specialty to the current one."
)


def generate_referral(
    case_summary: str,
    current: str,
    chat_backend,
    specialties: tuple[str, ...],
) -> ReferralReport | None:
    """``None`` means no referral needed (model proposed the current specialty)."""
    prompt = (
        f"Decide whether this case, currently managed by {current}, should be "
        "referred to another specialty, and produce a referral report.\n"
        f"{_REFERRAL_GRAMMAR_HINT}\n\nCase summary:\n{case_summary}"
    )
    proposal = _parse_referral(chat_backend.chat([ChatMessage("user", prompt)], ChatParams()).text, current)
    if proposal is None:
        retry = (
            "Your previous reply could not be parsed as a referral report. "
            f"{_REFERRAL_GRAMMAR_HINT}\n\nCase summary:\n{case_summary}"
        )
        proposal = _parse_referral(chat_backend.chat([ChatMessage("user", retry)], ChatParams()).text, current)
        if proposal is None:
            raise GenerationMalformed("referral report unparseable after retry")

    recommended, rationale, summary, points = proposal
    if recommended not in specialties:
        allowed = ", ".join(specialties)
        retry = (
            f"'{recommended}' is not a recognized specialty. Choose from: {allowed}.\n"
            f"{_REFERRAL_GRAMMAR_HINT}\n\nCase summary:\n{case_summary}"
        )
        proposal = _parse_referral(chat_backend.chat([ChatMessage("user", retry)], ChatParams()).text, current)
        if proposal is None:
            raise GenerationMalformed("referral report unparseable after specialty retry")
        recommended, rationale, summary, points = proposal
        if recommended not in specialties:
            raise UnknownSpecialtyProposed(recommended)
    if recommended == current:
        return None
    return ReferralReport(current, recommended, rationale, summary, points)


def _parse_referral(raw: str, current: str):
    m = re.search(r"^Recommended Specialty:\s*(.+)$", raw, re.MULTILINE)
    if not m:
        return None
    recommended = m.group(1).strip()
    _, sections = _split_sections(raw)
    by_key = {h: b for h, b in sections}
    rationale = by_key.get("Rationale", "").strip()
    summary = by_key.get("Clinical Summary", "").strip()
    points = tuple(
        line.lstrip("-* ").strip()
        for line in by_key.get("Points for Attention", "").splitlines()
        if line.strip().startswith(("-", "*"))
    )
    if recommended != current and (not rationale or not points):
        return None
    if recommended == current and not rationale:
        rationale = "No referral needed."
    return recommended, rationale, summary, points or ("",)


def render_referral(report: ReferralReport) -> str:
    return "\n".join(
        [
            "# Referral Report",
            f"Current Specialty: {report.current_specialty}",
            f"Recommended Specialty: {report.recommended_specialty}",
            "",
            "## Rationale",
            report.rationale,
            "",
            "## Clinical Summary",
            report.clinical_summary or PLACEHOLDER,
            "",
            "## Points for Attention",
            *[f"- {p}" for p in report.points_for_attention],
            "",
        ]
    )


# --- medications ----------------------------------------------------------------

UNVERIFIED_SOURCE = "model knowledge, unverified"

_MEDICATION_GRAMMAR_HINT = (
    "Reply in markdown. For each recommendation output a block:\n"
    "## Recommendation <i>\nBrand Name: <text>\nGeneric Name: <text>\n"
    "Dosage: <amount with unit>\nFrequency: <text>\nDuration: <text>\n"
    "Cautions: <item>; <item>\nSide Effects: <item>; <item>\n"
    "Patient Considerations: <text>\nSource: <reference or leave blank>"
)


def generate_medications(
    assessment: DiagnosisAssessment,
    grounding: list[GroundingDoc],
    chat_backend,
    n: int = 3,
) -> list[MedicationRecommendation]:
    if n < 1:
        raise ValueError("n must be >= 1")
    prompt = (
        f"Recommend up to {n} medications for the final diagnosis "
        f"'{assessment.diagnosis}' (confidence {assessment.confidence}/10).\n"
        f"{_MEDICATION_GRAMMAR_HINT}\n\n{_grounding_block(grounding)}"
    )
    provenance = {d.provenance_line() for d in grounding}
    meds = _parse_medications(chat_backend.chat([ChatMessage("user", prompt)], ChatParams()).text, provenance)
    if not meds:
        retry = "Your previous reply had no parseable recommendation blocks. " + prompt
        meds = _parse_medications(chat_backend.chat([ChatMessage("user", retry)], ChatParams()).text, provenance)
        if not meds:
            raise GenerationMalformed("no parseable medication recommendations after retry")
    return meds[:n]


def _parse_medications(raw: str, provenance: set[str]) -> list[MedicationRecommendation]:
    _, sections = _split_sections(raw)
    meds = []
    for heading, body in sections:
        if not heading.lower().startswith("recommendation"):
            continue
        fields = {}
        for line in body.splitlines():
            if ":" in line:
                key, _, value = line.partition(":")
                fields[key.strip().lower()] = value.strip()
        source = fields.get("source", "")
        if not source:
            source = UNVERIFIED_SOURCE
        elif provenance and source not in provenance and not any(source in p for p in provenance):
            # Unrecognized citation: keep it but flag as unverified.
            source = f"{source} ({UNVERIFIED_SOURCE})"
        try:
            meds.append(
                MedicationRecommendation(
                    brand_name=fields.get("brand name", ""),
                    generic_name=fields.get("generic name", ""),
                    dosage=fields.get("dosage", ""),
                    frequency=fields.get("frequency", ""),
                    duration=fields.get("duration", ""),
                    cautions=_split_items(fields.get("cautions", "")),
                    side_effects=_split_items(fields.get("side effects", "")),
                    patient_considerations=fields.get("patient considerations", ""),
                    source=source,
                )
            )
        except ValueError as exc:
            logger.warning("dropping malformed medication block %r: %s", heading, exc)
    return meds


def _split_items(raw: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in raw.split(";") if x.strip())


def render_medication_plan(diagnosis: str, meds: list[MedicationRecommendation]) -> str:
    lines = ["# Medication Plan", f"Diagnosis: {diagnosis}", ""]
    for i, med in enumerate(meds, start=1):
        lines += [
            f"## Recommendation {i}",
            f"Brand Name: {med.brand_name or 'N/A'}",
            f"Generic Name: {med.generic_name}",
            f"Dosage: {med.dosage}",
            f"Frequency: {med.frequency}",
            f"Duration: {med.duration}",
            "Cautions: " + "; ".join(med.cautions),
            "Side Effects: " + "; ".join(med.side_effects),
            f"Patient Considerations: {med.patient_considerations}",
            f"Source: {med.source}",
            "",
        ]
    return "\n".join(lines)
