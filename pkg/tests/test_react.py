"""ReAct orchestrator: registry, action parsing, loop limits, audit trace."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medicalos.errors import DuplicateTool, InvalidName
from medicalos.gateway import ChatMessage, ScriptEntry, ScriptedChatBackend
from medicalos.react import (
    FinalAnswer,
    ParseFailure,
    ToolCall,
    ToolParam,
    ToolRegistry,
    ToolSpec,
    coerce_arg,
    parse_action,
    persist_trace,
    render_action,
    run_episode,
)


@pytest.fixture
def registry():
    reg = ToolRegistry()
    reg.register(
        ToolSpec(
            "goto_line",
            "jump to a line",
            (ToolParam("n", "integer"),),
        ),
        lambda n: f"at line {n}",
    )
    reg.register(
        ToolSpec(
            "search_keyword",
            "search documents",
            (ToolParam("query", "string"), ToolParam("limit", "integer", required=False)),
        ),
        lambda query, limit=10: f"{limit} hits for {query}",
    )
    reg.register(ToolSpec("noop", "does nothing"), lambda: None)
    return reg


class TestRegistry:
    def test_catalog_rendering(self, registry):
        catalog = registry.render_catalog()
        assert "goto_line(n: integer)" in catalog
        assert "search_keyword" in catalog

    def test_duplicate_and_invalid_names(self, registry):
        with pytest.raises(DuplicateTool):
            registry.register(ToolSpec("noop", "again"), lambda: None)
        with pytest.raises(InvalidName):
            registry.register(ToolSpec("Search Keyword", "bad"), lambda: None)


class TestParseAction:
    def test_tool_call_with_coercion(self, registry):
        raw = 'Thought: jump\nAction: goto_line\n```json\n{"n": "57"}\n```'
        action = parse_action(raw, registry)
        assert action == ToolCall("goto_line", {"n": 57})

    def test_final_answer(self, registry):
        action = parse_action("Final Answer: community-acquired pneumonia, confidence 8", registry)
        assert isinstance(action, FinalAnswer)
        assert "pneumonia" in action.text

    def test_missing_required_param(self, registry):
        raw = "Action: goto_line\n```json\n{}\n```"
        action = parse_action(raw, registry)
        assert isinstance(action, ParseFailure)
        assert "'n'" in action.reason

    def test_unknown_tool_and_params(self, registry):
        assert isinstance(parse_action("Action: missing_tool\n```json\n{}\n```", registry), ParseFailure)
        raw = 'Action: goto_line\n```json\n{"n": 1, "bogus": 2}\n```'
        action = parse_action(raw, registry)
        assert isinstance(action, ParseFailure) and "bogus" in action.reason

    def test_gibberish(self, registry):
        assert isinstance(parse_action("lorem ipsum", registry), ParseFailure)

    def test_optional_param(self, registry):
        raw = 'Action: search_keyword\n```json\n{"query": "fever"}\n```'
        assert parse_action(raw, registry) == ToolCall("search_keyword", {"query": "fever"})

    @settings(max_examples=60)
    @given(
        n=st.integers(-1000, 1000),
        query=st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=20),
    )
    def test_render_parse_roundtrip(self, n, query):
        registry = ToolRegistry()
        registry.register(ToolSpec("goto_line", "jump", (ToolParam("n", "integer"),)), lambda n: n)
        registry.register(
            ToolSpec(
                "search_keyword",
                "search",
                (ToolParam("query", "string"), ToolParam("limit", "integer", required=False)),
            ),
            lambda query, limit=10: None,
        )
        for call in (
            ToolCall("goto_line", {"n": n}),
            ToolCall("search_keyword", {"query": query, "limit": 5}),
        ):
            assert parse_action(render_action(call), registry) == call


class TestCoerce:
    def test_coercions(self):
        assert coerce_arg("5", "integer") == 5
        assert coerce_arg("2.5", "number") == 2.5
        assert coerce_arg("true", "boolean") is True
        assert coerce_arg("b", "enum:a|b") == "b"
        with pytest.raises(ValueError):
            coerce_arg("c", "enum:a|b")
        with pytest.raises(ValueError):
            coerce_arg("maybe", "boolean")


def scripted_sequence(*responses):
    """Each response keyed to the turn count via observation markers."""

    class _Seq:
        def __init__(self):
            self.i = 0
            self.requests = []

        def chat(self, messages, params=None):
            from medicalos.gateway import Completion

            self.requests.append(messages)
            text = responses[min(self.i, len(responses) - 1)]
            self.i += 1
            return Completion(text=text, backend_id="seq")

    return _Seq()


class TestRunEpisode:
    def test_two_calls_then_final(self, registry, tmp_path):
        backend = scripted_sequence(
            'Thought: first\nAction: goto_line\n```json\n{"n": 3}\n```',
            'Action: search_keyword\n```json\n{"query": "fever"}\n```',
            "Final Answer: diagnosis: pneumonia; confidence: 8",
        )
        trace_path = tmp_path / "trace.jsonl"
        outcome, trace = run_episode("diagnose", registry, backend, trace_path=trace_path)
        assert isinstance(outcome, FinalAnswer)
        assert len(trace) == 3
        assert trace[0].observation == "at line 3"
        assert [s.index for s in trace] == [1, 2, 3]
        # persisted audit trail
        records = [json.loads(line) for line in trace_path.read_text().splitlines()]
        assert records[2]["action"]["kind"] == "final_answer"

    def test_parse_failure_limit(self, registry):
        backend = scripted_sequence("gibberish")
        outcome, trace = run_episode("goal", registry, backend, max_parse_failures=3)
        assert outcome is None
        assert len(trace) == 3
        assert all(isinstance(s.action, ParseFailure) for s in trace)

    def test_step_bound(self, registry):
        backend = scripted_sequence('Action: noop\n```json\n{}\n```')
        outcome, trace = run_episode("goal", registry, backend, max_steps=5, max_parse_failures=99)
        assert outcome is None
        assert len(trace) == 5

    def test_tool_error_becomes_observation(self, registry):
        registry.register(ToolSpec("explode", "always fails"), lambda: 1 / 0)
        backend = scripted_sequence(
            'Action: explode\n```json\n{}\n```',
            "Final Answer: done",
        )
        outcome, trace = run_episode("goal", registry, backend)
        assert trace[0].observation.startswith("tool_error:")
        assert isinstance(outcome, FinalAnswer)

    def test_corrective_feedback_quotes_grammar(self, registry):
        backend = scripted_sequence("??", "Final Answer: ok")
        outcome, trace = run_episode("goal", registry, backend)
        # the corrective observation is fed back as the next user message
        second_request = backend.requests[1]
        feedback = second_request[-1].content
        assert "parse_error" in feedback and "Action:" in feedback
        assert isinstance(outcome, FinalAnswer)

    def test_audit_totality(self, registry):
        backend = scripted_sequence(
            'Action: noop\n```json\n{}\n```',
            "Final Answer: done",
        )
        outcome, trace = run_episode("goal", registry, backend)
        # every chat exchange appears in the trace: 2 requests -> 2 steps
        assert len(backend.requests) == len(trace) == 2

    def test_empty_registry_rejected(self):
        with pytest.raises(ValueError):
            run_episode("goal", ToolRegistry(), scripted_sequence("x"))


@settings(max_examples=40, deadline=None)
@given(
    replies=st.lists(
        st.sampled_from(
            [
                "garbage",
                'Action: noop\n```json\n{}\n```',
                'Action: goto_line\n```json\n{"n": 2}\n```',
                "Final Answer: done",
            ]
        ),
        min_size=1,
        max_size=30,
    ),
    max_steps=st.integers(1, 10),
)
def test_step_bound_fuzz(replies, max_steps):
    reg = ToolRegistry()
    reg.register(ToolSpec("noop", "nothing"), lambda: None)
    reg.register(ToolSpec("goto_line", "jump", (ToolParam("n", "integer"),)), lambda n: n)
    backend = scripted_sequence(*replies)
    outcome, trace = run_episode("goal", reg, backend, max_steps=max_steps)
    assert len(trace) <= max_steps + 1
    if isinstance(outcome, FinalAnswer):
        assert isinstance(trace[-1].action, FinalAnswer)
