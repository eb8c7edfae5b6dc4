"""Shared fixtures: canonical document builders and scripted backends."""

from __future__ import annotations

import socket

import pytest

from medicalos.documents import PLACEHOLDER, SECTION_KEYS


def report_markdown(
    diagnosis="community-acquired pneumonia",
    confidence=8,
    revision=1,
    overrides=None,
    sources=("[]",),
    include_sources=True,
):
    """Build a canonical-grammar report document for scripted backends."""
    overrides = overrides or {}
    lines = [
        "# Medical Report",
        f"Diagnosis: {diagnosis}",
        f"Confidence: {confidence}/10",
        f"Revision: {revision}",
        "",
    ]
    defaults = {
        "Patient Identification": "45-year-old male, id p1.",
        "Medical History": "Recent open cholecystectomy.",
        "Physical Examination Findings": PLACEHOLDER,
        "Test Results": PLACEHOLDER,
        "Treatment Plan": "Start empiric antibiotics.",
        "Progress Notes": "Initial inquiry completed.",
        "Discharge Summary": PLACEHOLDER,
    }
    for key in SECTION_KEYS:
        lines.append(f"## {key}")
        lines.append(overrides.get(key, defaults[key]))
        lines.append("")
    if include_sources:
        lines.append("## Sources")
        lines.append("None.")
        lines.append("")
    return "\n".join(lines)


def medication_markdown(n=3):
    blocks = []
    drugs = [
        ("Biaxin", "clarithromycin", "500 mg", "every 12 hours", "7 days"),
        ("Tylenol", "acetaminophen", "650 mg", "every 6 hours as needed", "5 days"),
        ("Robitussin", "dextromethorphan", "20 mg", "every 8 hours", "5 days"),
    ]
    for i, (brand, generic, dose, freq, dur) in enumerate(drugs[:n], start=1):
        blocks.append(
            "\n".join(
                [
                    f"## Recommendation {i}",
                    f"Brand Name: {brand}",
                    f"Generic Name: {generic}",
                    f"Dosage: {dose}",
                    f"Frequency: {freq}",
                    f"Duration: {dur}",
                    "Cautions: check allergies; renal dosing",
                    "Side Effects: nausea; headache",
                    "Patient Considerations: take with food",
                    "Source: ",
                ]
            )
        )
    return "\n\n".join(blocks)


def referral_markdown(current="PrimaryCare", recommended="Pulmonology", points=2):
    bullets = "\n".join(f"- attention point {i}" for i in range(1, points + 1))
    return "\n".join(
        [
            f"Current Specialty: {current}",
            f"Recommended Specialty: {recommended}",
            "## Rationale",
            "Imaging suggests a pulmonary process.",
            "## Clinical Summary",
            "Fever, productive cough, infiltrate on chest film.",
            "## Points for Attention",
            bullets,
        ]
    )


@pytest.fixture
def no_network(monkeypatch):
    """Record (and block) any attempt to open a network connection."""
    attempts = []
    original = socket.socket.connect

    def guard(self, address):
        attempts.append(address)
        raise OSError(f"network disabled in tests: {address}")

    monkeypatch.setattr(socket.socket, "connect", guard)
    return attempts
