#!/usr/bin/env python3
"""Regenerate the viewer conformance corpus used by the console tests.

Emits documents plus the reference viewer's match spans and final viewport
positions after a scripted op sequence, so the TypeScript viewer can be
held to exact parity with the Python implementation.

Usage: python3 tools/make_viewer_conformance.py
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from medicalos import viewer

OUT = Path(__file__).resolve().parents[1] / "frontend" / "tests" / "fixtures" / "viewer-conformance.json"


def main() -> None:
    rng = random.Random(12)
    alphabet = "abcAB -"
    corpus = []
    docs = [
        "alpha beta\nBETA gamma beta\n\nbeta",  # overlaps + case folding
        "aaaa\naaa\na",  # overlapping starts counted at every position
        "single line only",
    ]
    for _ in range(7):
        docs.append(
            "\n".join(
                "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 24)))
                for _ in range(rng.randint(1, 60))
            )
        )
    for i, content in enumerate(docs):
        height = rng.randint(1, 12)
        state = viewer.open_document(content, height)
        ops = []
        for _ in range(6):
            if rng.random() < 0.5:
                delta = rng.randint(-20, 20)
                state = viewer.scroll(state, delta)
                ops.append({"op": "scroll", "delta": delta})
            else:
                line = rng.randint(1, state.line_count)
                state = viewer.goto_line(state, line)
                ops.append({"op": "goto", "line": line})
        keywords = {}
        for kw in ("a", "ab", "beta", "aa", "zz"):
            matches = viewer.find_all(state, kw)
            keywords[kw] = {
                "matchCount": sum(len(spans) for _, spans in matches),
                "matches": [
                    {"line": line, "spans": [{"start": s, "end": e} for s, e in spans]}
                    for line, spans in matches
                ],
            }
        corpus.append(
            {
                "id": f"doc-{i:02d}",
                "content": content,
                "height": height,
                "ops": ops,
                "final": {"topLine": state.top_line, "cursorLine": state.cursor_line},
                "keywords": keywords,
            }
        )
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(corpus, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(corpus)} documents to {OUT}")


if __name__ == "__main__":
    main()
