"""Pure document-navigation engine: scrolling, line jumps, keyword lookup.

All operations are total over valid states (out-of-range inputs clamp,
never raise) and return new :class:`ViewerState` values; there is no
hidden state, so states can be copied freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import EmptyKeyword


@dataclass(frozen=True)
class ViewerState:
    lines: tuple[str, ...]
    cursor_line: int  # 1-based
    top_line: int  # 1-based
    height: int

    @property
    def line_count(self) -> int:
        return len(self.lines)


def open_document(content: str, height: int) -> ViewerState:
    if height < 1:
        raise ValueError("viewport height must be >= 1")
    lines = tuple(line.rstrip("\r") for line in content.split("\n"))
    if not lines:
        lines = ("",)
    return ViewerState(lines=lines, cursor_line=1, top_line=1, height=height)


def _max_top(state: ViewerState) -> int:
    return max(1, state.line_count - state.height + 1)


def _clamp(n: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, n))


def scroll(state: ViewerState, delta: int) -> ViewerState:
    top = _clamp(state.top_line + delta, 1, _max_top(state))
    # The cursor rides along with the viewport, so interior scrolls invert.
    cursor = _clamp(state.cursor_line + (top - state.top_line), top, top + state.height - 1)
    cursor = _clamp(cursor, 1, state.line_count)
    return replace(state, top_line=top, cursor_line=cursor)


def goto_line(state: ViewerState, n: int) -> ViewerState:
    cursor = _clamp(n, 1, state.line_count)
    # Jumps put the cursor line at the top of the viewport.
    if not (state.top_line <= cursor <= state.top_line + state.height - 1):
        top = _clamp(cursor, 1, _max_top(state))
    else:
        top = state.top_line
    return replace(state, cursor_line=cursor, top_line=top)


def find_all(state: ViewerState, keyword: str) -> list[tuple[int, list[tuple[int, int]]]]:
    """All case-insensitive occurrences as (line_number, [(start, end), ...]).

    Column spans are 0-based half-open character offsets; lines ascend and
    spans within a line ascend. Overlapping occurrences are counted at
    every start position.
    """
    if not keyword:
        raise EmptyKeyword("keyword must be non-empty")
    needle = keyword.lower()
    out: list[tuple[int, list[tuple[int, int]]]] = []
    for lineno, line in enumerate(state.lines, start=1):
        hay = line.lower()
        spans: list[tuple[int, int]] = []
        start = 0
        while True:
            idx = hay.find(needle, start)
            if idx < 0:
                break
            spans.append((idx, idx + len(needle)))
            start = idx + 1
        if spans:
            out.append((lineno, spans))
    return out


def goto_first(state: ViewerState, keyword: str) -> ViewerState | None:
    """Jump to the first occurrence; ``None`` (state unchanged) when absent."""
    matches = find_all(state, keyword)
    if not matches:
        return None
    return goto_line(state, matches[0][0])
