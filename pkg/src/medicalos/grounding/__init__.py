"""Key-term extraction and retrieval of grounding passages.

Sources: Wikipedia (REST summary endpoint), PubMed (E-utilities JSON),
and DailyMed (SPL search). All fetches go through one client with a
content-addressed file cache; in offline mode only the cache and bundled
fixtures are consulted and no connection is ever opened.
"""

from .terms import KeyTermSet, extract_key_terms, fallback_terms
from .client import (
    GroundingDoc,
    KnowledgeClient,
    SOURCE_DAILYMED,
    SOURCE_FIXTURE,
    SOURCE_PUBMED,
    SOURCE_WIKIPEDIA,
    normalize_term,
)

__all__ = [
    "KeyTermSet",
    "extract_key_terms",
    "fallback_terms",
    "GroundingDoc",
    "KnowledgeClient",
    "normalize_term",
    "SOURCE_WIKIPEDIA",
    "SOURCE_PUBMED",
    "SOURCE_DAILYMED",
    "SOURCE_FIXTURE",
]
