"""Grounding-source client with file cache, fixtures, and offline mode."""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from ..errors import AllSourcesFailed, GroundingError

SOURCE_WIKIPEDIA = "Wikipedia"
SOURCE_PUBMED = "PubMed"
SOURCE_DAILYMED = "DailyMed"
SOURCE_FIXTURE = "LocalFixture"

ONLINE_SOURCES = (SOURCE_WIKIPEDIA, SOURCE_PUBMED, SOURCE_DAILYMED)

DEFAULT_EXCERPT_CAP = 2000
_RATE_LIMIT_PER_S = 3.0

WIKIPEDIA_SUMMARY_URL = "https://en.wikipedia.org/api/rest_v1/page/summary/{title}"
PUBMED_ESEARCH_URL = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi"
PUBMED_ESUMMARY_URL = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esummary.fcgi"
DAILYMED_SPLS_URL = "https://dailymed.nlm.nih.gov/dailymed/services/v2/spls.json"


@dataclass(frozen=True)
class GroundingDoc:
    source: str
    query: str
    title: str
    excerpt: str
    url_or_id: str
    fetched_at: float

    def provenance_line(self) -> str:
        return f"[{self.source}] {self.title} ({self.url_or_id})"


def normalize_term(term: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", term.lower()).strip("-")
    return slug or "term"


def _default_transport(method: str, url: str, params: dict | None, timeout: float) -> dict:
    import requests

    resp = requests.request(method, url, params=params, timeout=timeout)
    resp.raise_for_status()
    return resp.json()


class KnowledgeClient:
    """Fetch grounding passages with cache-first lookup.

    * cache: ``<cache_dir>/<source-lower>/<normalized-term>.json``
    * fixtures: same layout, bundled in-package plus an optional user dir
    * offline: serve only cache + fixtures; the transport is never called
    """

    def __init__(
        self,
        cache_dir: str | Path,
        offline: bool = True,
        fixtures_dir: str | Path | None = None,
        excerpt_cap: int = DEFAULT_EXCERPT_CAP,
        transport: Callable[[str, str, dict | None, float], dict] | None = None,
        timeout: float = 15.0,
    ):
        self.cache_dir = Path(cache_dir)
        self.offline = offline
        self.fixtures_dir = Path(fixtures_dir) if fixtures_dir else None
        self.excerpt_cap = excerpt_cap
        self.timeout = timeout
        self._transport = transport or _default_transport
        self.network_calls = 0
        self._rate_lock = threading.Lock()
        self._last_request: dict[str, list[float]] = {}

    # --- public API --------------------------------------------------------

    def fetch_grounding(self, term: str, sources: Sequence[str] = (SOURCE_WIKIPEDIA, SOURCE_PUBMED)) -> list[GroundingDoc]:
        if not term.strip():
            raise GroundingError("term is empty")
        docs: list[GroundingDoc] = []
        errors: list[str] = []
        for source in sources:
            cached = self._cache_get(source, term)
            if cached is not None:
                docs.append(cached)
                continue
            fixture = self._fixture_get(source, term)
            if fixture is not None:
                self._cache_put(source, term, fixture)
                docs.append(fixture)
                continue
            if self.offline:
                continue
            try:
                doc = self._fetch_online(source, term)
            except Exception as exc:
                errors.append(f"{source}: {exc}")
                continue
            if doc is not None:
                self._cache_put(source, term, doc)
                docs.append(doc)
        if not self.offline and not docs and errors and len(errors) == len(sources):
            raise AllSourcesFailed("; ".join(errors))
        return docs

    def fetch_drug_grounding(self, diagnosis_or_drug: str) -> list[GroundingDoc]:
        return self.fetch_grounding(diagnosis_or_drug, sources=(SOURCE_DAILYMED, SOURCE_WIKIPEDIA))

    # --- cache / fixtures ----------------------------------------------------

    def _doc_path(self, base: Path, source: str, term: str) -> Path:
        return base / source.lower() / f"{normalize_term(term)}.json"

    def _cache_get(self, source: str, term: str) -> GroundingDoc | None:
        path = self._doc_path(self.cache_dir, source, term)
        if not path.is_file():
            return None
        return GroundingDoc(**json.loads(path.read_text(encoding="utf-8")))

    def _cache_put(self, source: str, term: str, doc: GroundingDoc) -> None:
        path = self._doc_path(self.cache_dir, source, term)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(asdict(doc), indent=2), encoding="utf-8")
        tmp.replace(path)

    def _fixture_get(self, source: str, term: str) -> GroundingDoc | None:
        if self.fixtures_dir is not None:
            path = self._doc_path(self.fixtures_dir, source, term)
            if path.is_file():
                return GroundingDoc(**json.loads(path.read_text(encoding="utf-8")))
        bundled = resources.files("medicalos.grounding").joinpath(
            f"fixtures/{source.lower()}/{normalize_term(term)}.json"
        )
        if bundled.is_file():
            return GroundingDoc(**json.loads(bundled.read_text("utf-8")))
        return None

    # --- online fetchers -------------------------------------------------------

    def _request(self, source: str, url: str, params: dict | None = None) -> dict:
        self._throttle(source)
        self.network_calls += 1
        return self._transport("GET", url, params, self.timeout)

    def _throttle(self, source: str) -> None:
        with self._rate_lock:
            now = time.monotonic()
            window = [t for t in self._last_request.get(source, []) if now - t < 1.0]
            if len(window) >= _RATE_LIMIT_PER_S:
                wait = 1.0 - (now - window[0])
                if wait > 0:
                    time.sleep(wait)
            window.append(time.monotonic())
            self._last_request[source] = window

    def _fetch_online(self, source: str, term: str) -> GroundingDoc | None:
        if source == SOURCE_WIKIPEDIA:
            return self._fetch_wikipedia(term)
        if source == SOURCE_PUBMED:
            return self._fetch_pubmed(term)
        if source == SOURCE_DAILYMED:
            return self._fetch_dailymed(term)
        raise GroundingError(f"unknown source {source!r}")

    def _fetch_wikipedia(self, term: str) -> GroundingDoc | None:
        title = term.strip().replace(" ", "_")
        data = self._request(SOURCE_WIKIPEDIA, WIKIPEDIA_SUMMARY_URL.format(title=title))
        extract = data.get("extract") or ""
        if not extract:
            return None
        return GroundingDoc(
            source=SOURCE_WIKIPEDIA,
            query=term,
            title=data.get("title", term),
            excerpt=extract[: self.excerpt_cap],
            url_or_id=(data.get("content_urls", {}).get("desktop", {}) or {}).get(
                "page", f"https://en.wikipedia.org/wiki/{title}"
            ),
            fetched_at=time.time(),
        )

    def _fetch_pubmed(self, term: str) -> GroundingDoc | None:
        search = self._request(
            SOURCE_PUBMED,
            PUBMED_ESEARCH_URL,
            {"db": "pubmed", "term": term, "retmode": "json", "retmax": "1"},
        )
        ids = search.get("esearchresult", {}).get("idlist", [])
        if not ids:
            return None
        pmid = ids[0]
        summary = self._request(
            SOURCE_PUBMED,
            PUBMED_ESUMMARY_URL,
            {"db": "pubmed", "id": pmid, "retmode": "json"},
        )
        entry = summary.get("result", {}).get(pmid, {})
        title = entry.get("title") or f"PubMed {pmid}"
        excerpt_bits = [title]
        if entry.get("source"):
            excerpt_bits.append(f"Journal: {entry['source']}")
        if entry.get("pubdate"):
            excerpt_bits.append(f"Published: {entry['pubdate']}")
        return GroundingDoc(
            source=SOURCE_PUBMED,
            query=term,
            title=title,
            excerpt=" | ".join(excerpt_bits)[: self.excerpt_cap],
            url_or_id=f"https://pubmed.ncbi.nlm.nih.gov/{pmid}/",
            fetched_at=time.time(),
        )

    def _fetch_dailymed(self, term: str) -> GroundingDoc | None:
        data = self._request(SOURCE_DAILYMED, DAILYMED_SPLS_URL, {"drug_name": term, "pagesize": "1"})
        entries = data.get("data") or []
        if not entries:
            return None
        entry = entries[0]
        setid = entry.get("setid", "")
        title = entry.get("title") or term
        return GroundingDoc(
            source=SOURCE_DAILYMED,
            query=term,
            title=title,
            excerpt=title[: self.excerpt_cap],
            url_or_id=f"https://dailymed.nlm.nih.gov/dailymed/drugInfo.cfm?setid={setid}",
            fetched_at=time.time(),
        )
