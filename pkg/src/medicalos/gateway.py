"""Chat-completion and embedding backends behind one narrow interface.

Two interchangeable families:

* remote backends speaking the OpenAI-compatible ``/v1/chat/completions``
  and ``/v1/embeddings`` wire shape, with bounded retry on transient
  transport failures;
* deterministic offline backends (scripted replay for chat, hashed
  character trigrams for embeddings) so the test suite never touches the
  network.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .errors import (
    DimensionMismatch,
    InvalidMessages,
    RateLimited,
    ScriptMiss,
    TransportError,
    ZeroVector,
)

VALID_ROLES = ("system", "user", "assistant", "tool")

CHAT_TIMEOUT_S = 60.0
EMBED_TIMEOUT_S = 30.0
RETRY_BASE_S = 0.5
RETRY_FACTOR = 2.0
MAX_RETRIES = 3

ENV_BASE_URL = "MEDOS_LLM_BASE_URL"
ENV_API_KEY = "MEDOS_LLM_API_KEY"
ENV_CHAT_MODEL = "MEDOS_LLM_MODEL"
ENV_EMBED_MODEL = "MEDOS_EMBED_MODEL"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatParams:
    temperature: float = 0.0
    max_tokens: int | None = None
    stop_sequences: tuple[str, ...] = ()


@dataclass(frozen=True)
class Completion:
    text: str
    backend_id: str
    latency_ms: int = 0
    token_estimate: int = 0


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model_id: str


def validate_messages(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise InvalidMessages("messages must be non-empty")
    if messages[0].role not in ("system", "user"):
        raise InvalidMessages(f"conversation must start with system or user, got {messages[0].role!r}")
    for m in messages:
        if m.role not in VALID_ROLES:
            raise InvalidMessages(f"unknown role {m.role!r}")
        if m.role in ("user", "tool") and not m.content:
            raise InvalidMessages(f"empty content for role {m.role!r}")


def last_user_content(messages: Sequence[ChatMessage]) -> str:
    for m in reversed(messages):
        if m.role == "user":
            return m.content
    return messages[-1].content


def prompt_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# --- scripted chat backend -------------------------------------------------


@dataclass(frozen=True)
class ScriptEntry:
    """One replay rule: exact digest of the last user message, or a regex over it."""

    match_kind: str  # "digest" | "regex"
    match_value: str
    response: str

    def matches(self, last_user: str) -> bool:
        if self.match_kind == "digest":
            return prompt_digest(last_user) == self.match_value
        if self.match_kind == "regex":
            return re.search(self.match_value, last_user, re.DOTALL) is not None
        raise ValueError(f"unknown match_kind {self.match_kind!r}")


class ScriptedChatBackend:
    """Replay backend: pure function of the request, safe for concurrent use.

    In strict mode an unmatched prompt raises :class:`ScriptMiss`; in
    fallback mode it returns the configured default response. Matching is
    first-entry-wins and stateless (no consumption ordering).
    """

    def __init__(
        self,
        entries: Sequence[ScriptEntry],
        strict: bool = True,
        default_response: str = "",
        backend_id: str = "scripted",
    ):
        self.entries = list(entries)
        self.strict = strict
        self.default_response = default_response
        self.backend_id = backend_id
        self.on_request: Callable[[Sequence[ChatMessage]], None] | None = None

    @classmethod
    def from_fixture_file(cls, path: str | Path, **kwargs) -> "ScriptedChatBackend":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [ScriptEntry(e["match_kind"], e["match_value"], e["response"]) for e in raw]
        return cls(entries, **kwargs)

    def chat(self, messages: Sequence[ChatMessage], params: ChatParams = ChatParams()) -> Completion:
        validate_messages(messages)
        if self.on_request is not None:
            self.on_request(messages)
        last = last_user_content(messages)
        for entry in self.entries:
            if entry.matches(last):
                return Completion(
                    text=entry.response,
                    backend_id=self.backend_id,
                    token_estimate=estimate_tokens(entry.response),
                )
        if not self.strict:
            return Completion(text=self.default_response, backend_id=self.backend_id)
        raise ScriptMiss(f"no script entry matched prompt digest {prompt_digest(last)}")


def estimate_tokens(text: str) -> int:
    # Rough 4-chars-per-token heuristic; only used for bookkeeping.
    return max(0, (len(text) + 3) // 4)


# --- remote chat backend ---------------------------------------------------


class HttpChatBackend:
    """OpenAI-compatible chat client with exponential-backoff retry.

    At most ``MAX_RETRIES`` retries (4 total attempts) per call; retries
    only on transport-level failures and HTTP 429/5xx.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = CHAT_TIMEOUT_S,
        sleep: Callable[[float], None] = time.sleep,
        session=None,
    ):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_CHAT_MODEL, "gpt-4o-mini")
        self.timeout = timeout
        self.sleep = sleep
        if session is None:
            import requests

            session = requests.Session()
        self.session = session
        self.backend_id = f"http:{self.model}"
        self.on_request: Callable[[Sequence[ChatMessage]], None] | None = None

    def _post(self, path: str, payload: dict, timeout: float) -> dict:
        last_exc: Exception | None = None
        for attempt in range(MAX_RETRIES + 1):
            if attempt:
                self.sleep(RETRY_BASE_S * RETRY_FACTOR ** (attempt - 1))
            try:
                resp = self.session.post(
                    f"{self.base_url}{path}",
                    json=payload,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=timeout,
                )
            except Exception as exc:  # transport failure
                last_exc = TransportError(str(exc))
                continue
            if resp.status_code == 429:
                retry_after = _parse_retry_after(resp)
                last_exc = RateLimited("rate limited", retry_after=retry_after)
                continue
            if resp.status_code >= 500:
                last_exc = TransportError(f"server error {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"request failed with {resp.status_code}: {resp.text[:500]}")
            return resp.json()
        assert last_exc is not None
        raise last_exc

    def chat(self, messages: Sequence[ChatMessage], params: ChatParams = ChatParams()) -> Completion:
        validate_messages(messages)
        if self.on_request is not None:
            self.on_request(messages)
        payload: dict = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": params.temperature,
        }
        if params.max_tokens is not None:
            payload["max_tokens"] = params.max_tokens
        if params.stop_sequences:
            payload["stop"] = list(params.stop_sequences)
        start = time.monotonic()
        data = self._post("/v1/chat/completions", payload, self.timeout)
        latency_ms = int((time.monotonic() - start) * 1000)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc
        if not text:
            raise TransportError("backend returned an empty completion (refusal)")
        usage = data.get("usage") or {}
        return Completion(
            text=text,
            backend_id=self.backend_id,
            latency_ms=latency_ms,
            token_estimate=int(usage.get("completion_tokens") or estimate_tokens(text)),
        )


def _parse_retry_after(resp) -> float | None:
    value = resp.headers.get("Retry-After")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


# --- embedding backends ----------------------------------------------------

TRIGRAM_DIM = 256


class TrigramEmbeddingBackend:
    """Deterministic offline embeddings: L2-normalized character-trigram
    hash-bucket counts over the lowercased text, dimension 256.

    Not semantically meaningful, but shared substrings yield higher cosine
    similarity, which is all the offline tests rely on.
    """

    model_id = f"offline-trigram-{TRIGRAM_DIM}"

    def __init__(self, dim: int = TRIGRAM_DIM):
        self.dim = dim
        self.calls = 0
        self._lock = threading.Lock()

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts or any(not t for t in texts):
            raise InvalidMessages("embed requires non-empty texts")
        with self._lock:
            self.calls += 1
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> EmbeddingVector:
        counts = [0.0] * self.dim
        padded = f"  {text.lower().strip()}  "
        for i in range(len(padded) - 2):
            tri = padded[i : i + 3]
            bucket = zlib.crc32(tri.encode("utf-8")) % self.dim
            counts[bucket] += 1.0
        norm = math.sqrt(sum(c * c for c in counts))
        if norm == 0.0:
            counts[0] = 1.0
            norm = 1.0
        return EmbeddingVector(tuple(c / norm for c in counts), self.model_id)


class HttpEmbeddingBackend:
    """OpenAI-compatible ``/v1/embeddings`` client; shares retry policy with chat."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = EMBED_TIMEOUT_S,
        sleep: Callable[[float], None] = time.sleep,
        session=None,
    ):
        self._http = HttpChatBackend(base_url, api_key, model or os.environ.get(ENV_EMBED_MODEL, "text-embedding-3-small"), timeout, sleep, session)
        self.model_id = f"http:{self._http.model}"

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts or any(not t for t in texts):
            raise InvalidMessages("embed requires non-empty texts")
        data = self._http._post("/v1/embeddings", {"model": self._http.model, "input": list(texts)}, self._http.timeout)
        try:
            rows = sorted(data["data"], key=lambda d: d["index"])
            vectors = [EmbeddingVector(tuple(float(x) for x in row["embedding"]), self.model_id) for row in rows]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise TransportError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        dims = {len(v.values) for v in vectors}
        if len(dims) > 1:
            raise TransportError(f"inconsistent embedding dimensions: {sorted(dims)}")
        return vectors


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a,b) / (|a|*|b|) in double precision."""
    if len(a.values) != len(b.values):
        raise DimensionMismatch(f"{len(a.values)} vs {len(b.values)}")
    dot = 0.0
    na = 0.0
    nb = 0.0
    for x, y in zip(a.values, b.values):
        dot += x * y
        na += x * x
        nb += y * y
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return dot / (math.sqrt(na) * math.sqrt(nb))
