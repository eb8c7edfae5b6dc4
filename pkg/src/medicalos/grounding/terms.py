"""Key-term extraction from inquiry transcripts.

Primary path asks the chat backend for a short delimited list; a parse
failure gets one repair prompt, after which we fall back to the most
frequent non-stopword tokens of the transcript itself.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from ..errors import EmptyTranscript
from ..gateway import ChatMessage, ChatParams

MAX_TERMS = 3
_MAX_TERM_CHARS = 64
_MAX_TERM_WORDS = 5

_EXTRACT_PROMPT = (
    "You are a clinical assistant. Extract up to three key medical terms "
    "from the following patient inquiry transcript. Reply with ONLY the "
    "terms, separated by semicolons, no other text.\n\nTranscript:\n{transcript}"
)
_REPAIR_PROMPT = (
    "Your previous reply could not be parsed. Reply with ONLY 1 to 3 short "
    "medical terms separated by semicolons, nothing else.\n\nTranscript:\n{transcript}"
)

_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z\-]{2,}")


@dataclass(frozen=True)
class KeyTermSet:
    terms: tuple[str, ...]

    def __post_init__(self):
        assert 1 <= len(self.terms) <= MAX_TERMS


def _load_stopwords() -> frozenset[str]:
    text = resources.files("medicalos.grounding").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


STOPWORDS = _load_stopwords()


def parse_term_list(raw: str) -> list[str]:
    """Parse a delimited term list; returns [] when nothing plausible parsed."""
    parts = re.split(r"[;,\n]+", raw)
    terms: list[str] = []
    seen: set[str] = set()
    for part in parts:
        term = part.strip().strip(".-*• \t").strip()
        if not term or len(term) > _MAX_TERM_CHARS:
            continue
        if len(term.split()) > _MAX_TERM_WORDS:
            continue
        if not re.search(r"[A-Za-z]", term):
            continue
        key = term.lower()
        if key in seen:
            continue
        seen.add(key)
        terms.append(term)
        if len(terms) == MAX_TERMS:
            break
    # A single "term" spanning most of a prose reply is a failed parse.
    if len(terms) == 1 and ";" not in raw and "," not in raw and len(raw.strip().split()) > _MAX_TERM_WORDS:
        return []
    return terms


def fallback_terms(transcript: str, n: int = MAX_TERMS) -> list[str]:
    """Most frequent non-stopword tokens; ties broken by first occurrence."""
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for idx, match in enumerate(_TOKEN_RE.finditer(transcript)):
        token = match.group().lower()
        if token in STOPWORDS:
            continue
        counts[token] = counts.get(token, 0) + 1
        first_seen.setdefault(token, idx)
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    return ranked[:n]


def extract_key_terms(transcript: str, chat_backend) -> KeyTermSet:
    if not transcript.strip():
        raise EmptyTranscript("transcript is empty")
    for template in (_EXTRACT_PROMPT, _REPAIR_PROMPT):
        completion = chat_backend.chat(
            [ChatMessage("user", template.format(transcript=transcript))],
            ChatParams(temperature=0.0),
        )
        terms = parse_term_list(completion.text)
        if terms:
            return KeyTermSet(tuple(terms))
    terms = fallback_terms(transcript)
    if not terms:
        # Degenerate transcript of pure stopwords; keep the invariant 1..3.
        terms = [transcript.split()[0]]
    return KeyTermSet(tuple(terms[:MAX_TERMS]))
