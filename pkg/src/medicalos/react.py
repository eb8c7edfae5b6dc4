"""ReAct tool-calling loop with a typed tool registry and full audit trace.

Action grammar (provider-agnostic, plain text)::

    Thought: <free text, optional>
    Action: <tool_name>
    ```json
    {"param": "value"}
    ```

or a terminal::

    Final Answer: <text>

Anything else parses to a failure step; the loop feeds a corrective
observation back to the model and keeps going until a final answer,
``max_steps``, or ``max_parse_failures``.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .errors import DuplicateTool, InvalidName
from .gateway import ChatMessage, ChatParams

_NAME_RE = re.compile(r"^[a-z_][a-z0-9_]*$")
_ACTION_RE = re.compile(r"^Action:\s*(\S+)\s*$", re.MULTILINE)
_FINAL_RE = re.compile(r"Final Answer:\s*(.*)", re.DOTALL)
_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)

DEFAULT_MAX_STEPS = 20
DEFAULT_MAX_PARSE_FAILURES = 3


@dataclass(frozen=True)
class ToolParam:
    name: str
    type_tag: str = "string"  # string | integer | number | boolean | enum:<a|b>
    required: bool = True


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[ToolParam, ...] = ()
    returns: str = "string"


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict[str, Any]


@dataclass(frozen=True)
class FinalAnswer:
    text: str


@dataclass(frozen=True)
class ParseFailure:
    raw: str
    reason: str


@dataclass(frozen=True)
class TraceStep:
    index: int  # contiguous from 1
    thought: str
    action: ToolCall | FinalAnswer | ParseFailure
    observation: str
    timestamp: float


class ToolRegistry:
    def __init__(self):
        self._specs: dict[str, ToolSpec] = {}
        self._impls: dict[str, Callable[..., Any]] = {}

    def register(self, spec: ToolSpec, impl: Callable[..., Any]) -> "ToolRegistry":
        if not _NAME_RE.match(spec.name):
            raise InvalidName(spec.name)
        if spec.name in self._specs:
            raise DuplicateTool(spec.name)
        self._specs[spec.name] = spec
        self._impls[spec.name] = impl
        return self

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def __len__(self) -> int:
        return len(self._specs)

    def spec(self, name: str) -> ToolSpec:
        return self._specs[name]

    def invoke(self, call: ToolCall) -> Any:
        return self._impls[call.tool](**call.args)

    def render_catalog(self) -> str:
        """Tool catalog for the system prompt, in registration order."""
        lines = []
        for spec in self._specs.values():
            params = ", ".join(
                f"{p.name}: {p.type_tag}{'' if p.required else ' (optional)'}" for p in spec.params
            )
            lines.append(f"- {spec.name}({params}) -> {spec.returns}: {spec.description}")
        return "\n".join(lines)


def coerce_arg(value: Any, type_tag: str) -> Any:
    """Checked coercion of a string-transported arg to its semantic type."""
    if type_tag == "string":
        return str(value)
    if type_tag == "integer":
        if isinstance(value, bool):
            raise ValueError("boolean is not an integer")
        return int(value)
    if type_tag == "number":
        return float(value)
    if type_tag == "boolean":
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("true", "1", "yes"):
            return True
        if text in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if type_tag.startswith("enum:"):
        allowed = type_tag[5:].split("|")
        if str(value) not in allowed:
            raise ValueError(f"{value!r} not in {allowed}")
        return str(value)
    raise ValueError(f"unknown type tag {type_tag!r}")


def parse_action(raw: str, registry: ToolRegistry) -> ToolCall | FinalAnswer | ParseFailure:
    final = _FINAL_RE.search(raw)
    action = _ACTION_RE.search(raw)
    if final and (not action or final.start() < action.start()):
        return FinalAnswer(final.group(1).strip())
    if not action:
        return ParseFailure(raw, "no 'Action:' line or 'Final Answer:' found")
    tool_name = action.group(1)
    if tool_name not in registry:
        return ParseFailure(raw, f"unknown tool {tool_name!r}")
    spec = registry.spec(tool_name)

    fence = _FENCE_RE.search(raw, action.end())
    if spec.params and not fence:
        return ParseFailure(raw, "missing fenced JSON args block")
    args_raw: dict[str, Any] = {}
    if fence:
        try:
            args_raw = json.loads(fence.group(1))
        except json.JSONDecodeError as exc:
            return ParseFailure(raw, f"invalid JSON args: {exc}")
        if not isinstance(args_raw, dict):
            return ParseFailure(raw, "args must be a JSON object")

    known = {p.name: p for p in spec.params}
    unknown = set(args_raw) - set(known)
    if unknown:
        return ParseFailure(raw, f"unknown params: {sorted(unknown)}")
    args: dict[str, Any] = {}
    for param in spec.params:
        if param.name not in args_raw:
            if param.required:
                return ParseFailure(raw, f"missing required param {param.name!r}")
            continue
        try:
            args[param.name] = coerce_arg(args_raw[param.name], param.type_tag)
        except (ValueError, TypeError) as exc:
            return ParseFailure(raw, f"param {param.name!r}: {exc}")
    return ToolCall(tool_name, args)


def render_action(call: ToolCall) -> str:
    """Inverse of :func:`parse_action` for tool calls (round-trip property)."""
    args = {k: (v if isinstance(v, (int, float, bool)) else str(v)) for k, v in call.args.items()}
    return f"Action: {call.tool}\n```json\n{json.dumps(args)}\n```"


def _extract_thought(raw: str) -> str:
    m = re.search(r"Thought:\s*(.*?)(?:\n(?:Action|Final Answer):|\Z)", raw, re.DOTALL)
    return m.group(1).strip() if m else ""


_SYSTEM_TEMPLATE = (
    "You operate clinical tools. Available tools:\n{catalog}\n\n"
    "On each turn reply with either:\n"
    "Thought: <your reasoning>\nAction: <tool_name>\n"
    "```json\n{{\"param\": \"value\"}}\n```\n"
    "or, when done:\nFinal Answer: <your answer>"
)


def run_episode(
    goal: str,
    registry: ToolRegistry,
    chat_backend,
    max_steps: int = DEFAULT_MAX_STEPS,
    max_parse_failures: int = DEFAULT_MAX_PARSE_FAILURES,
    trace_path: str | Path | None = None,
) -> tuple[FinalAnswer | None, list[TraceStep]]:
    """Run the loop; returns (outcome, trace). ``None`` outcome = exhausted.

    Tool execution errors become observations, never crashes; backend
    errors propagate after the gateway's own retries.
    """
    if len(registry) == 0:
        raise ValueError("registry must contain at least one tool")
    messages = [
        ChatMessage("system", _SYSTEM_TEMPLATE.format(catalog=registry.render_catalog())),
        ChatMessage("user", goal),
    ]
    trace: list[TraceStep] = []
    parse_failures = 0
    outcome: FinalAnswer | None = None

    for index in range(1, max_steps + 1):
        completion = chat_backend.chat(messages, ChatParams())
        raw = completion.text
        action = parse_action(raw, registry)
        thought = _extract_thought(raw)

        if isinstance(action, FinalAnswer):
            trace.append(TraceStep(index, thought, action, "", time.time()))
            outcome = action
            break
        if isinstance(action, ParseFailure):
            parse_failures += 1
            observation = (
                f"parse_error: {action.reason}. Reply with 'Action: <tool>' plus a "
                "fenced JSON args object, or 'Final Answer: <text>'."
            )
        else:
            try:
                result = registry.invoke(action)
                observation = "" if result is None else str(result)
            except Exception as exc:  # tool isolation: errors are observations
                observation = f"tool_error: {exc}"
        trace.append(TraceStep(index, thought, action, observation, time.time()))
        messages.append(ChatMessage("assistant", raw))
        messages.append(ChatMessage("user", f"Observation: {observation}"))
        if parse_failures >= max_parse_failures:
            break

    if trace_path is not None:
        persist_trace(trace, trace_path)
    return outcome, trace


def persist_trace(trace: Sequence[TraceStep], path: str | Path) -> None:
    """Line-delimited JSON, one record per step."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for step in trace:
            action = step.action
            if isinstance(action, ToolCall):
                act = {"kind": "tool_call", "tool": action.tool, "args": action.args}
            elif isinstance(action, FinalAnswer):
                act = {"kind": "final_answer", "text": action.text}
            else:
                act = {"kind": "parse_failure", "raw": action.raw, "reason": action.reason}
            fh.write(
                json.dumps(
                    {
                        "index": step.index,
                        "thought": step.thought,
                        "action": act,
                        "observation": step.observation,
                        "timestamp": step.timestamp,
                    }
                )
                + "\n"
            )
