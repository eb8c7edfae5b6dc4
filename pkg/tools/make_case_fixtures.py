#!/usr/bin/env python3
"""Regenerate the bundled benchmark case fixtures.

Fully deterministic: running it twice produces byte-identical JSON. The 30
cases (6 specialties x 5 scenario shapes) are synthetic and exercise every
workflow path: immediate acceptance, multi-exam loops, forced finals on an
exhausted exam budget, unmatched exam requests, correct/wrong-first/invalid
referrals, and medication-generation failure.

Usage: python3 tools/make_case_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "medicalos" / "harness" / "fixtures" / "cases"

# specialty -> (slug, [(diagnosis, complaint, [test names]), ... x5])
SPEC_DATA = {
    "Pulmonology": (
        "pulm",
        [
            ("community-acquired bacterial lung infection", "productive cough and fever",
             ["chest X-ray", "sputum culture", "complete blood count"]),
            ("chronic obstructive airway disease", "breathlessness on exertion",
             ["spirometry panel", "chest CT scan", "arterial blood gas panel"]),
            ("pulmonary embolism", "sudden pleuritic chest pain",
             ["CT pulmonary angiogram", "d-dimer blood test", "leg vein ultrasound"]),
            ("asthma exacerbation", "wheezing and night cough",
             ["peak flow measurement", "allergy panel", "chest X-ray"]),
            ("pleural effusion", "dull ache and shortness of breath",
             ["thoracic ultrasound", "pleural fluid culture", "chest X-ray"]),
        ],
    ),
    "Cardiology": (
        "card",
        [
            ("stable angina", "chest tightness when climbing stairs",
             ["exercise stress test", "coronary CT angiogram", "lipid panel"]),
            ("atrial fibrillation", "fluttering heartbeat and fatigue",
             ["twelve-lead electrocardiogram", "holter monitor recording", "thyroid panel"]),
            ("congestive heart failure", "swollen ankles and breathlessness lying flat",
             ["echocardiogram", "natriuretic peptide blood test", "chest X-ray"]),
            ("essential hypertension", "recurring morning headaches",
             ["ambulatory blood pressure monitoring", "renal function panel", "electrocardiogram"]),
            ("pericarditis", "sharp chest pain relieved by sitting forward",
             ["echocardiogram", "inflammatory marker panel", "cardiac MRI"]),
        ],
    ),
    "Gastroenterology": (
        "gastro",
        [
            ("peptic ulcer", "burning upper abdominal pain after meals",
             ["upper endoscopy", "urea breath test", "stool antigen test"]),
            ("gallstone disease", "right upper abdominal pain after fatty food",
             ["abdominal ultrasound", "liver function panel", "complete blood count"]),
            ("celiac disease", "bloating and chronic loose stools",
             ["tissue transglutaminase antibody test", "duodenal biopsy", "iron studies panel"]),
            ("acute pancreatitis", "severe upper abdominal pain radiating to the back",
             ["serum lipase test", "abdominal CT scan", "triglyceride panel"]),
            ("inflammatory bowel disease", "crampy pain with bloody stools",
             ["colonoscopy", "fecal calprotectin test", "inflammatory marker panel"]),
        ],
    ),
    "Neurology": (
        "neuro",
        [
            ("migraine with aura", "throbbing one-sided headaches with flashing lights",
             ["brain MRI", "neurological examination", "vision field test"]),
            ("peripheral neuropathy", "tingling and numbness in both feet",
             ["nerve conduction study", "hemoglobin a1c test", "vitamin b12 level"]),
            ("epilepsy", "episodes of staring and lost time",
             ["electroencephalogram", "brain MRI", "metabolic panel"]),
            ("carpal tunnel syndrome", "night-time hand numbness",
             ["median nerve conduction study", "wrist ultrasound", "thyroid panel"]),
            ("ischemic stroke", "sudden one-sided weakness",
             ["brain CT scan", "carotid doppler ultrasound", "coagulation panel"]),
        ],
    ),
    "Dermatology": (
        "derm",
        [
            ("plaque psoriasis", "itchy scaly patches on elbows",
             ["skin biopsy", "fungal culture", "inflammatory marker panel"]),
            ("atopic dermatitis", "itchy rash in elbow creases",
             ["allergy panel", "skin swab culture", "immunoglobulin e level"]),
            ("contact dermatitis", "blistering rash on both hands",
             ["patch test panel", "skin scraping smear", "complete blood count"]),
            ("cutaneous fungal infection", "spreading ring-shaped rash",
             ["skin scraping smear", "fungal culture", "wood lamp examination"]),
            ("rosacea", "facial flushing and persistent redness",
             ["skin examination", "demodex skin smear", "inflammatory marker panel"]),
        ],
    ),
    "Orthopedics": (
        "ortho",
        [
            ("knee meniscus tear", "knee locking after a twisting fall",
             ["knee MRI", "knee X-ray", "joint range of motion examination"]),
            ("lumbar disc herniation", "low back pain shooting down one leg",
             ["lumbar spine MRI", "straight leg raise examination", "nerve conduction study"]),
            ("rotator cuff tear", "shoulder pain when reaching overhead",
             ["shoulder MRI", "shoulder X-ray", "strength testing examination"]),
            ("hip osteoarthritis", "groin stiffness worst in the morning",
             ["hip X-ray", "inflammatory marker panel", "gait examination"]),
            ("stress fracture of the foot", "forefoot pain after increasing training",
             ["foot MRI", "foot X-ray", "bone density scan"]),
        ],
    ),
}

UNMATCHED_EXAM = "zeta flux calibration probe"

WRONG_FIRST = {"Pulmonology": "Cardiology", "Cardiology": "Gastroenterology"}


def build_case(specialty: str, slug: str, idx: int, diagnosis: str, complaint: str, tests: list[str]) -> dict:
    case_id = f"case-{slug}-{idx + 1:02d}"
    age = 28 + 3 * idx + 2 * len(slug)
    profile = (
        f"Adult patient, age {age}. Presenting complaint: {complaint}. "
        "Symptoms began about two weeks ago and are gradually worsening. "
        "No known drug allergies; takes no regular medication."
    )
    history = (
        f"Patient reports {complaint} for roughly two weeks. No prior episodes. "
        "Non-smoker, moderate activity level, family history unremarkable."
    )
    findings = [
        {"name": "vital signs", "content": "Temperature 37.6 C, pulse 88, blood pressure 128/82, respirations 18."},
        {"name": "focused physical examination", "content": f"Findings consistent with {complaint}; no acute distress."},
    ]
    results = [
        {"name": name, "content": f"{name} shows changes supportive of {diagnosis}."}
        for name in tests
    ]

    answers = [
        f"I've had {complaint}, and it's been getting worse.",
        "It started about two weeks ago and has slowly gotten worse since then.",
        "Nothing else unusual — no allergies, and I don't take any regular medication.",
    ]
    vague = f"possible {diagnosis.split()[0]} condition"

    # Scenario shapes cycle by case index within each specialty.
    if idx == 0:
        assessments = [{"diagnosis": diagnosis, "confidence": 9}]
        exam_requests: list[str] = []
    elif idx == 1:
        assessments = [
            {"diagnosis": vague, "confidence": 6},
            {"diagnosis": diagnosis, "confidence": 7},
            {"diagnosis": diagnosis, "confidence": 9},
        ]
        exam_requests = [tests[0], tests[1]]
    elif idx == 2:
        assessments = [
            {"diagnosis": vague, "confidence": 5},
            {"diagnosis": vague, "confidence": 6},
            {"diagnosis": diagnosis, "confidence": 6},
            {"diagnosis": f"atypical {diagnosis}", "confidence": 7},
            {"diagnosis": f"atypical {diagnosis}", "confidence": 7},
        ]
        exam_requests = [tests[0], tests[1], UNMATCHED_EXAM, tests[2]]
    elif idx == 3:
        assessments = [
            {"diagnosis": vague, "confidence": 6},
            {"diagnosis": diagnosis, "confidence": 8},
        ]
        exam_requests = [tests[0]]
    else:
        assessments = [
            {"diagnosis": vague, "confidence": 6},
            {"diagnosis": vague, "confidence": 7},
            {"diagnosis": diagnosis, "confidence": 8},
        ]
        exam_requests = [tests[0], UNMATCHED_EXAM]

    referrals: list[dict] = []
    if specialty == "Neurology" and idx == 4:
        referrals = [{"after_round": 0, "recommended": "Neurocartography", "invalid": True}]
    elif idx == 3 and specialty in WRONG_FIRST:
        referrals = [
            {"after_round": 0, "recommended": WRONG_FIRST[specialty]},
            {"after_round": 1, "recommended": specialty},
        ]
    else:
        referrals = [{"after_round": 0, "recommended": specialty}]

    medications = 3
    if specialty == "Dermatology" and idx == 4:
        medications = 0
    elif specialty == "Gastroenterology" and idx == 4:
        medications = 2

    key_terms = "; ".join(diagnosis.split()[:2])
    if specialty == "Pulmonology" and idx == 0:
        key_terms = "pneumonia; chest pain"  # hits the bundled grounding fixtures

    return {
        "case_id": case_id,
        "specialty": specialty,
        "actor_profile": profile,
        "history": history,
        "physical_findings": findings,
        "test_results": results,
        "truth_diagnosis": diagnosis,
        "truth_specialty": specialty,
        "script": {
            "patient_answers": answers,
            "key_terms": key_terms,
            "assessments": assessments,
            "exam_requests": exam_requests,
            "referrals": referrals,
            "medications": medications,
            "use_tool_in_assessment": idx == 1,
        },
    }


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    count = 0
    for specialty, (slug, rows) in SPEC_DATA.items():
        for idx, (diagnosis, complaint, tests) in enumerate(rows):
            case = build_case(specialty, slug, idx, diagnosis, complaint, tests)
            path = OUT_DIR / f"{case['case_id']}.json"
            path.write_text(json.dumps(case, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            count += 1
    print(f"wrote {count} cases to {OUT_DIR}")


if __name__ == "__main__":
    main()
