"""Exam-request matching, exam categorization, and diagnosis scoring."""

from __future__ import annotations

from dataclasses import dataclass

from ..gateway import cosine_similarity
from .cases import CaseSpec, NamedItem

DEFAULT_MATCH_THRESHOLD = 0.5

CATEGORY_LABORATORY = "Laboratory"
CATEGORY_IMAGING = "Imaging"
CATEGORY_PHYSICAL = "PhysicalExam"
CATEGORY_OTHER = "Other"

# Ordered keyword rules; first category whose keyword appears wins.
# Versioned so emitted metrics can cite the rules used.
CATEGORY_RULES_VERSION = 1
CATEGORY_RULES: tuple[tuple[str, tuple[str, ...]], ...] = (
    (
        CATEGORY_IMAGING,
        (
            "x-ray", "xray", "radiograph", "ct", "mri", "ultrasound", "sonogra",
            "echocardiogram", "angiogra", "doppler", "pet scan", "scan", "imaging",
            "mammogra", "fluoroscopy",
        ),
    ),
    (
        CATEGORY_LABORATORY,
        (
            "blood count", "cbc", "panel", "blood test", "glucose", "culture",
            "urinalysis", "lab", "electrolyte", "troponin", "hemoglobin", "a1c",
            "tsh", "creatinine", "biopsy", "smear", "serology", "titer",
            "coagulation", "lipid", "liver function", "cholesterol", "antibody",
            "stool", "lumbar puncture", "pathology",
        ),
    ),
    (
        CATEGORY_PHYSICAL,
        (
            "physical exam", "examination", "vital", "auscultation", "palpation",
            "inspection", "reflex", "range of motion", "neurological exam",
            "mental status", "skin exam", "abdominal exam",
        ),
    ),
)


def categorize_exam(name: str) -> str:
    """Keyword-rule classification; unknown names fall back to Other."""
    if not name:
        raise ValueError("exam name must be non-empty")
    lowered = name.lower()
    for category, keywords in CATEGORY_RULES:
        if any(kw in lowered for kw in keywords):
            return category
    return CATEGORY_OTHER


@dataclass(frozen=True)
class ExamMatch:
    requested: str
    matched: NamedItem | None
    category: str | None
    similarity: float


def match_exam(
    requested: str,
    case: CaseSpec,
    embed_backend,
    threshold: float = DEFAULT_MATCH_THRESHOLD,
) -> ExamMatch:
    """Resolve a requested exam to the closest available finding/result.

    Cosine similarity over name embeddings; below-threshold best match
    means no match and the episode skips the exam.
    """
    if not requested.strip():
        raise ValueError("requested exam name must be non-empty")
    items = case.available_items()
    if not items:
        return ExamMatch(requested, None, None, 0.0)
    vectors = embed_backend.embed([requested] + [item.name for item in items])
    target, candidates = vectors[0], vectors[1:]
    best_item = None
    best_sim = -1.0
    for item, vec in zip(items, candidates):
        sim = cosine_similarity(target, vec)
        if sim > best_sim:
            best_item, best_sim = item, sim
    best_sim = max(0.0, min(1.0, best_sim))
    if best_item is None or best_sim < threshold:
        return ExamMatch(requested, None, None, best_sim)
    return ExamMatch(requested, best_item, categorize_exam(best_item.name), best_sim)


def score_diagnosis(predicted: str, truth: str, embed_backend) -> float:
    """Cosine similarity of the two diagnosis embeddings, clamped to [0, 1]."""
    if not predicted.strip() or not truth.strip():
        raise ValueError("predicted and truth diagnoses must be non-empty")
    pred_vec, truth_vec = embed_backend.embed([predicted, truth])
    return max(0.0, min(1.0, cosine_similarity(pred_vec, truth_vec)))
