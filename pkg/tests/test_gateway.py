"""Gateway: scripted replay, retries, offline embeddings, cosine math."""

from __future__ import annotations

import math

import pytest

from medicalos.errors import (
    DimensionMismatch,
    InvalidMessages,
    RateLimited,
    ScriptMiss,
    TransportError,
    ZeroVector,
)
from medicalos.gateway import (
    ChatMessage,
    EmbeddingVector,
    HttpChatBackend,
    ScriptEntry,
    ScriptedChatBackend,
    TrigramEmbeddingBackend,
    cosine_similarity,
    prompt_digest,
)


def user(text):
    return [ChatMessage("user", text)]


class TestScriptedBackend:
    def test_replay_matches_entry(self):
        backend = ScriptedChatBackend(
            [
                ScriptEntry("regex", r"alpha", "A"),
                ScriptEntry("regex", r"beta", "B"),
                ScriptEntry("digest", prompt_digest("exact prompt"), "C"),
            ]
        )
        assert backend.chat(user("say beta please")).text == "B"
        assert backend.chat(user("exact prompt")).text == "C"

    def test_determinism(self):
        backend = ScriptedChatBackend([ScriptEntry("regex", ".", "same")])
        a = backend.chat(user("anything"))
        b = backend.chat(user("anything"))
        assert a == b

    def test_strict_miss_names_digest(self):
        backend = ScriptedChatBackend([ScriptEntry("regex", r"nope-never", "x")])
        with pytest.raises(ScriptMiss) as exc:
            backend.chat(user("unmatched"))
        assert prompt_digest("unmatched") in str(exc.value)

    def test_fallback_mode(self):
        backend = ScriptedChatBackend([], strict=False, default_response="dflt")
        assert backend.chat(user("whatever")).text == "dflt"

    def test_invalid_messages(self):
        backend = ScriptedChatBackend([], strict=False)
        with pytest.raises(InvalidMessages):
            backend.chat([])
        with pytest.raises(InvalidMessages):
            backend.chat([ChatMessage("assistant", "hi")])
        with pytest.raises(InvalidMessages):
            backend.chat([ChatMessage("user", "")])


class _FakeResponse:
    def __init__(self, status_code, payload=None, headers=None):
        self.status_code = status_code
        self._payload = payload or {}
        self.headers = headers or {}
        self.text = ""

    def json(self):
        return self._payload


class _FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls += 1
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def _completion_payload(text="hello"):
    return {"choices": [{"message": {"content": text}}], "usage": {"completion_tokens": 2}}


class TestHttpBackend:
    def test_success_after_transient_failures(self):
        session = _FakeSession(
            [ConnectionError("boom"), _FakeResponse(503), _FakeResponse(200, _completion_payload())]
        )
        sleeps = []
        backend = HttpChatBackend("http://x", "k", "m", sleep=sleeps.append, session=session)
        out = backend.chat(user("hi"))
        assert out.text == "hello"
        assert session.calls == 3
        assert sleeps == [0.5, 1.0]  # exponential backoff base 500ms factor 2

    def test_retry_bound_four_attempts(self):
        session = _FakeSession([ConnectionError("x")] * 10)
        backend = HttpChatBackend("http://x", "k", "m", sleep=lambda s: None, session=session)
        with pytest.raises(TransportError):
            backend.chat(user("hi"))
        assert session.calls == 4

    def test_rate_limited_carries_retry_after(self):
        session = _FakeSession([_FakeResponse(429, headers={"Retry-After": "7"})] * 4)
        backend = HttpChatBackend("http://x", "k", "m", sleep=lambda s: None, session=session)
        with pytest.raises(RateLimited) as exc:
            backend.chat(user("hi"))
        assert exc.value.retry_after == 7.0

    def test_client_error_not_retried(self):
        session = _FakeSession([_FakeResponse(400)])
        backend = HttpChatBackend("http://x", "k", "m", sleep=lambda s: None, session=session)
        with pytest.raises(TransportError):
            backend.chat(user("hi"))
        assert session.calls == 1


class TestTrigramEmbeddings:
    def setup_method(self):
        self.backend = TrigramEmbeddingBackend()

    def test_deterministic_and_shaped(self):
        a1, b1 = self.backend.embed(["a", "b"])
        a2 = self.backend.embed(["a"])[0]
        assert a1 == a2
        assert len(a1.values) == len(b1.values) == 256

    def test_all_finite_unit_norm(self):
        (v,) = self.backend.embed(["community-acquired pneumonia"])
        assert all(math.isfinite(x) for x in v.values)
        assert math.isclose(sum(x * x for x in v.values), 1.0, rel_tol=1e-9)

    def test_similarity_ordering(self):
        pneumonia, bacterial, fracture = self.backend.embed(
            ["pneumonia", "bacterial pneumonia", "ankle fracture"]
        )
        close = cosine_similarity(pneumonia, bacterial)
        far = cosine_similarity(pneumonia, fracture)
        assert close > far

    def test_rejects_empty(self):
        with pytest.raises(InvalidMessages):
            self.backend.embed([])
        with pytest.raises(InvalidMessages):
            self.backend.embed(["ok", ""])


class TestCosine:
    def test_identity(self):
        v = EmbeddingVector((1.0, 2.0, 3.0), "m")
        assert abs(cosine_similarity(v, v) - 1.0) < 1e-12

    def test_orthogonal(self):
        a = EmbeddingVector((1.0, 0.0), "m")
        b = EmbeddingVector((0.0, 1.0), "m")
        assert cosine_similarity(a, b) == 0.0

    def test_hand_computed(self):
        a = EmbeddingVector((1.0, 2.0, 3.0), "m")
        b = EmbeddingVector((4.0, 5.0, 6.0), "m")
        expected = 32.0 / (math.sqrt(14.0) * math.sqrt(77.0))
        assert abs(cosine_similarity(a, b) - expected) < 1e-9

    def test_symmetry_and_scale_invariance(self):
        a = EmbeddingVector((0.3, -1.2, 2.5, 0.01), "m")
        b = EmbeddingVector((1.1, 0.4, -0.7, 3.0), "m")
        assert abs(cosine_similarity(a, b) - cosine_similarity(b, a)) < 1e-12
        ka = EmbeddingVector(tuple(7.5 * x for x in a.values), "m")
        assert abs(cosine_similarity(ka, b) - cosine_similarity(a, b)) < 1e-9

    def test_errors(self):
        a = EmbeddingVector((1.0, 2.0), "m")
        with pytest.raises(DimensionMismatch):
            cosine_similarity(a, EmbeddingVector((1.0,), "m"))
        with pytest.raises(ZeroVector):
            cosine_similarity(a, EmbeddingVector((0.0, 0.0), "m"))
