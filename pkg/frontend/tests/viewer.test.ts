// Exact-parity conformance: the console's local viewer must agree with the
// server-side /viewer engine on every document in the conformance corpus —
// same match counts, same spans, same final viewport position after the
// scripted op sequence. The corpus records the server engine's answers.

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import * as viewer from "../src/viewer";

interface FixtureDoc {
  id: string;
  content: string;
  height: number;
  ops: ({ op: "scroll"; delta: number } | { op: "goto"; line: number })[];
  final: { topLine: number; cursorLine: number };
  keywords: Record<
    string,
    { matchCount: number; matches: { line: number; spans: { start: number; end: number }[] }[] }
  >;
}

const corpus: FixtureDoc[] = JSON.parse(
  readFileSync(new URL("./fixtures/viewer-conformance.json", import.meta.url), "utf-8"),
);

function replay(doc: FixtureDoc): viewer.ViewerState {
  let state = viewer.openDocument(doc.content, doc.height);
  for (const op of doc.ops) {
    state = op.op === "scroll" ? viewer.scroll(state, op.delta) : viewer.gotoLine(state, op.line);
  }
  return state;
}

describe("viewer conformance corpus", () => {
  it("has documents to check", () => {
    expect(corpus.length).toBeGreaterThanOrEqual(10);
  });

  for (const doc of corpus) {
    it(`${doc.id}: final viewport position matches`, () => {
      const state = replay(doc);
      expect({ topLine: state.topLine, cursorLine: state.cursorLine }).toEqual(doc.final);
    });

    it(`${doc.id}: match counts and spans match`, () => {
      const state = replay(doc);
      for (const [keyword, expected] of Object.entries(doc.keywords)) {
        expect(viewer.matchCount(state, keyword)).toBe(expected.matchCount);
        expect(viewer.findAll(state, keyword)).toEqual(
          expected.matches.map((m) => ({ line: m.line, spans: m.spans })),
        );
      }
    });
  }
});

describe("viewer invariants", () => {
  it("cursor stays inside the viewport under scrolls", () => {
    let state = viewer.openDocument(Array.from({ length: 40 }, (_, i) => `line ${i}`).join("\n"), 5);
    for (const delta of [3, -100, 7, 7, 7, -2, 100, -1]) {
      state = viewer.scroll(state, delta);
      expect(state.cursorLine).toBeGreaterThanOrEqual(state.topLine);
      expect(state.cursorLine).toBeLessThanOrEqual(state.topLine + state.height - 1);
      expect(viewer.viewport(state)).toHaveLength(5);
    }
  });

  it("goto outside the viewport puts the cursor line at the top", () => {
    const state = viewer.gotoLine(viewer.openDocument("a\nb\nc\nd\ne\nf\ng", 2), 5);
    expect(state.topLine).toBe(5);
    expect(state.cursorLine).toBe(5);
  });

  it("gotoFirst returns null when the keyword is absent", () => {
    const state = viewer.openDocument("alpha\nbeta", 2);
    expect(viewer.gotoFirst(state, "zz")).toBeNull();
    expect(viewer.gotoFirst(state, "BETA")?.cursorLine).toBe(2);
  });

  it("rejects empty keywords and non-positive heights", () => {
    expect(() => viewer.findAll(viewer.openDocument("x", 1), "")).toThrow();
    expect(() => viewer.openDocument("x", 0)).toThrow();
  });
});
