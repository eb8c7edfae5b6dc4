// Pure document-navigation engine: scrolling, line jumps, keyword lookup.
//
// Behavioral twin of the server-side viewer so local navigation in the
// console shows exactly what the /viewer endpoint would report. All
// operations clamp out-of-range inputs and return new states.

export interface ViewerState {
  readonly lines: readonly string[];
  readonly cursorLine: number; // 1-based
  readonly topLine: number; // 1-based
  readonly height: number;
}

export interface Span {
  readonly start: number;
  readonly end: number; // 0-based half-open character offsets
}

export interface LineMatches {
  readonly line: number;
  readonly spans: readonly Span[];
}

export function openDocument(content: string, height: number): ViewerState {
  if (height < 1) throw new Error("viewport height must be >= 1");
  let lines = content.split("\n").map((line) => line.replace(/\r+$/, ""));
  if (lines.length === 0) lines = [""];
  return { lines, cursorLine: 1, topLine: 1, height };
}

function maxTop(state: ViewerState): number {
  return Math.max(1, state.lines.length - state.height + 1);
}

function clamp(n: number, lo: number, hi: number): number {
  return Math.max(lo, Math.min(hi, n));
}

export function scroll(state: ViewerState, delta: number): ViewerState {
  const top = clamp(state.topLine + delta, 1, maxTop(state));
  // The cursor rides along with the viewport, so interior scrolls invert.
  let cursor = clamp(state.cursorLine + (top - state.topLine), top, top + state.height - 1);
  cursor = clamp(cursor, 1, state.lines.length);
  return { ...state, topLine: top, cursorLine: cursor };
}

export function gotoLine(state: ViewerState, n: number): ViewerState {
  const cursor = clamp(n, 1, state.lines.length);
  // Jumps put the cursor line at the top of the viewport.
  let top = state.topLine;
  if (!(state.topLine <= cursor && cursor <= state.topLine + state.height - 1)) {
    top = clamp(cursor, 1, maxTop(state));
  }
  return { ...state, cursorLine: cursor, topLine: top };
}

// All case-insensitive occurrences; overlapping occurrences are counted at
// every start position. Lines ascend and spans within a line ascend.
export function findAll(state: ViewerState, keyword: string): LineMatches[] {
  if (!keyword) throw new Error("keyword must be non-empty");
  const needle = keyword.toLowerCase();
  const out: LineMatches[] = [];
  state.lines.forEach((line, i) => {
    const hay = line.toLowerCase();
    const spans: Span[] = [];
    let start = 0;
    for (;;) {
      const idx = hay.indexOf(needle, start);
      if (idx < 0) break;
      spans.push({ start: idx, end: idx + needle.length });
      start = idx + 1;
    }
    if (spans.length > 0) out.push({ line: i + 1, spans });
  });
  return out;
}

export function matchCount(state: ViewerState, keyword: string): number {
  return findAll(state, keyword).reduce((sum, m) => sum + m.spans.length, 0);
}

// Jump to the first occurrence; null (state unchanged) when absent.
export function gotoFirst(state: ViewerState, keyword: string): ViewerState | null {
  const matches = findAll(state, keyword);
  if (matches.length === 0) return null;
  return gotoLine(state, matches[0].line);
}

export function viewport(state: ViewerState): string[] {
  return state.lines.slice(state.topLine - 1, state.topLine - 1 + state.height);
}
