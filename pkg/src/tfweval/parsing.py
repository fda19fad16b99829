"""Extraction of text labels and label-span pairs from raw model output.

Model responses drift from the requested format, so extraction is total: any
byte sequence yields a ParsedAnswer, never an exception.

Pair grammar. A pair is `:<label>;<span>` where label and span are non-empty
runs free of `:`, `;` and line breaks; surrounding whitespace is trimmed from
both. A span therefore ends at the next `:` or `;`, at a line break, or at
the end of the response, which makes back-to-back pairs (`:a;x:b;y`) and
spans with internal spaces both parse exactly. Pairs are reported in
occurrence order with duplicates retained. A pair whose label is not in the
task schema is dropped with a diagnostic: it could never match a gold pair,
so dropping keeps scores identical while keeping logs readable.

Text-level labels match case-insensitively when the schema label is pure
ASCII (exactly otherwise) and never inside a larger ASCII word. When several
candidates occur, the LAST occurrence wins: answers are expected to state
pairs first and the conclusion last, so the trailing mention is the verdict.
That choice is isolated in `extract_text_label` so it is easy to flip.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .corpus import LabelSpanPair, TaskSchema, nfc

PAIR_PATTERN = re.compile(r":([^:;\r\n]+);([^:;\r\n]+)")


@dataclass(frozen=True)
class ParsedAnswer:
    """Structured view of one raw model response."""

    text_label: str | None
    pairs: tuple[LabelSpanPair, ...]
    raw: str
    diagnostics: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "text_label": self.text_label,
            "pairs": [p.as_dict() for p in self.pairs],
            "raw": self.raw,
            "diagnostics": list(self.diagnostics),
        }


def parse_pairs(
    text: str,
    schema: TaskSchema | None = None,
    diagnostics: list[str] | None = None,
) -> list[LabelSpanPair]:
    """Scan a response for label-span pairs under the grammar above.

    With a schema, labels are canonicalized to schema members and unknown
    labels dropped (noted in `diagnostics` when a list is supplied).
    """
    pairs: list[LabelSpanPair] = []
    for match in PAIR_PATTERN.finditer(nfc(text)):
        label = match.group(1).strip()
        span = match.group(2).strip()
        if not label or not span:
            if diagnostics is not None:
                diagnostics.append(
                    f"dropped pair with empty {'label' if not label else 'span'} "
                    f"at offset {match.start()}"
                )
            continue
        if schema is not None:
            canonical = schema.canonical_word_label(label)
            if canonical is None:
                if diagnostics is not None:
                    diagnostics.append(f"dropped pair with unknown label {label!r}")
                continue
            label = canonical
        pairs.append(LabelSpanPair(label, span))
    return pairs


def _is_ascii_alnum(ch: str) -> bool:
    return ch.isascii() and ch.isalnum()


def _boundary_ok(text: str, start: int, end: int) -> bool:
    # Reject matches glued into a larger ASCII word ("IT" inside "with");
    # CJK neighbours never block a match since they fail the ASCII test.
    if start > 0 and _is_ascii_alnum(text[start - 1]) and _is_ascii_alnum(text[start]):
        return False
    if end < len(text) and _is_ascii_alnum(text[end]) and _is_ascii_alnum(text[end - 1]):
        return False
    return True


def extract_text_label(text: str, schema: TaskSchema) -> str | None:
    """The schema text label whose last qualifying occurrence is rightmost."""
    haystack = nfc(text)
    best: tuple[int, int] | None = None
    best_label: str | None = None
    for label in schema.text_labels:
        flags = re.IGNORECASE if label.isascii() else 0
        for match in re.finditer(re.escape(nfc(label)), haystack, flags):
            if not _boundary_ok(haystack, match.start(), match.end()):
                continue
            position = (match.start(), match.end())
            if best is None or position > best:
                best = position
                best_label = label
    return best_label


def parse_answer(text: str, schema: TaskSchema) -> ParsedAnswer:
    """Total extraction of (text label, pairs) with accumulated diagnostics."""
    diagnostics: list[str] = []
    try:
        pairs = parse_pairs(text, schema, diagnostics)
        label = extract_text_label(text, schema)
    except Exception as exc:  # pragma: no cover - totality guard
        return ParsedAnswer(
            text_label=None,
            pairs=(),
            raw=text,
            diagnostics=(f"extraction failed: {exc!r}",),
        )
    if label is None:
        diagnostics.append("no text-level label found")
    if not pairs:
        diagnostics.append("no label-span pairs found")
    return ParsedAnswer(
        text_label=label,
        pairs=tuple(pairs),
        raw=text,
        diagnostics=tuple(diagnostics),
    )
