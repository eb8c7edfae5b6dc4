"""Simulated patient actor.

The persona prompt is seeded ONLY with the case's actor profile: never the
ground-truth diagnosis and never unfetched findings or results. That
information firewall is asserted over captured prompts in the test suite.
"""

from __future__ import annotations

from ..gateway import ChatMessage, ChatParams
from .cases import CaseSpec

PATIENT_PERSONA_PREFIX = "You are playing a patient in a clinical interview."

_PERSONA_TEMPLATE = (
    PATIENT_PERSONA_PREFIX
    + " Answer the clinician's question in character, first person, a few "
    "sentences, using only what your profile says.\n\n"
    "Your profile:\n{profile}\n\nClinician's question: {question}"
)


def simulate_patient_turn(case: CaseSpec, question: str, chat_backend) -> str:
    if not question.strip():
        raise ValueError("question must be non-empty")
    prompt = _PERSONA_TEMPLATE.format(profile=case.actor_profile, question=question)
    return chat_backend.chat([ChatMessage("user", prompt)], ChatParams()).text
