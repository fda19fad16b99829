"""Data model for mixed word-level / text-level corpora.

A corpus record carries a document, its text-level category label and an
ordered list of word-level label-span annotations. Corpora live in JSONL
files, one UTF-8 JSON object per line:

    {"id": "s1", "text": "...", "text_label": "positive",
     "pairs": [{"label": "positive", "span": "delicious"}]}

All strings are NFC-normalized at load so span equality never depends on the
normalization form of the source file.
"""
from __future__ import annotations

import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

# Reserved by the pair wire format `:label;span`. Line breaks are excluded as
# well: a pair must survive on a single line of an answer block.
FORBIDDEN_IN_PAIR = (":", ";", "\n", "\r")

KNOWN_RECORD_FIELDS = frozenset({"id", "text", "text_label", "pairs"})
KNOWN_PAIR_FIELDS = frozenset({"label", "span"})


class CorpusError(ValueError):
    """Invalid corpus content or schema violation."""


class CorpusFormatError(CorpusError):
    """A line of a corpus file could not be decoded into a record."""

    def __init__(self, path: str | Path, line_no: int, reason: str):
        super().__init__(f"{path}, line {line_no}: {reason}")
        self.line_no = line_no


class SampleValidationError(CorpusError):
    """A structurally sound record violates the task schema."""

    def __init__(self, sample_id: str, reason: str):
        super().__init__(f"sample {sample_id!r}: {reason}")
        self.sample_id = sample_id


def nfc(text: str) -> str:
    """NFC-normalize, tolerating any str content (lone surrogates included)."""
    try:
        return unicodedata.normalize("NFC", text)
    except ValueError:
        return text


def label_key(label: str) -> str:
    """Comparison key for category labels.

    NFC plus surrounding-whitespace trim; pure-ASCII labels additionally fold
    case. Non-ASCII (e.g. Japanese) labels are compared exactly.
    """
    trimmed = nfc(label).strip()
    return trimmed.casefold() if trimmed.isascii() else trimmed


@dataclass(frozen=True)
class LabelSpanPair:
    """One word-level annotation: a category label plus the exact span text."""

    label: str
    span: str

    def __post_init__(self):
        for name, value in (("label", self.label), ("span", self.span)):
            if not value:
                raise CorpusError(f"pair {name} must be non-empty")
            for ch in FORBIDDEN_IN_PAIR:
                if ch in value:
                    raise CorpusError(
                        f"pair {name} {value!r} contains reserved character {ch!r}"
                    )

    def as_dict(self) -> dict:
        return {"label": self.label, "span": self.span}


@dataclass(frozen=True)
class TaskSchema:
    """Label inventories and exemplar-shot count for one task."""

    task_id: str
    display_name: str
    text_labels: tuple[str, ...]
    word_labels: tuple[str, ...]
    icl_shots: int = 1

    def __post_init__(self):
        for name, labels in (("text_labels", self.text_labels),
                             ("word_labels", self.word_labels)):
            if not labels:
                raise CorpusError(f"{self.task_id}: {name} must be non-empty")
            if len(set(labels)) != len(labels):
                raise CorpusError(f"{self.task_id}: {name} contains duplicates")
        if self.icl_shots < 1:
            raise CorpusError(f"{self.task_id}: icl_shots must be positive")
        object.__setattr__(
            self, "_text_lookup", {label_key(l): l for l in self.text_labels}
        )
        object.__setattr__(
            self, "_word_lookup", {label_key(l): l for l in self.word_labels}
        )

    def canonical_text_label(self, raw: str) -> str | None:
        """The schema member matching `raw` under the label comparison key."""
        return self._text_lookup.get(label_key(raw))

    def canonical_word_label(self, raw: str) -> str | None:
        return self._word_lookup.get(label_key(raw))


@dataclass(frozen=True)
class MixedSample:
    """One corpus record: document text plus gold labels at both levels."""

    sample_id: str
    text: str
    text_label: str
    gold_pairs: tuple[LabelSpanPair, ...]
    task_id: str

    def as_dict(self) -> dict:
        return {
            "id": self.sample_id,
            "text": self.text,
            "text_label": self.text_label,
            "pairs": [p.as_dict() for p in self.gold_pairs],
        }


def _schema_registry_from_mapping(raw: Mapping) -> dict[str, TaskSchema]:
    registry = {}
    for task_id, entry in raw.items():
        registry[task_id] = TaskSchema(
            task_id=task_id,
            display_name=entry.get("display_name", task_id),
            text_labels=tuple(entry["text_labels"]),
            word_labels=tuple(entry["word_labels"]),
            icl_shots=int(entry.get("icl_shots", 1)),
        )
    return registry


def load_schema_registry(path: str | Path | None = None) -> dict[str, TaskSchema]:
    """Load task schemas from a JSON registry file (packaged default)."""
    if path is None:
        raw = json.loads(
            resources.files("tfweval").joinpath("data/task_schemas.json").read_text("utf-8")
        )
    else:
        raw = json.loads(Path(path).read_text("utf-8"))
    return _schema_registry_from_mapping(raw)


def get_task_schema(task_id: str, path: str | Path | None = None) -> TaskSchema:
    registry = load_schema_registry(path)
    if task_id not in registry:
        known = ", ".join(sorted(registry))
        raise CorpusError(f"unknown task {task_id!r} (known: {known})")
    return registry[task_id]


def _validate_record(record: dict, schema: TaskSchema, path, line_no: int) -> MixedSample:
    for field_name in ("id", "text", "text_label", "pairs"):
        if field_name not in record:
            raise CorpusFormatError(path, line_no, f"missing field {field_name!r}")
    sample_id = str(record["id"])
    text = nfc(str(record["text"]))
    if not text:
        raise SampleValidationError(sample_id, "text is empty")

    text_label = schema.canonical_text_label(str(record["text_label"]))
    if text_label is None:
        raise SampleValidationError(
            sample_id,
            f"text_label {record['text_label']!r} is not one of {list(schema.text_labels)}",
        )

    pairs = []
    raw_pairs = record["pairs"]
    if not isinstance(raw_pairs, list):
        raise CorpusFormatError(path, line_no, "field 'pairs' must be an array")
    for entry in raw_pairs:
        if not isinstance(entry, dict) or "label" not in entry or "span" not in entry:
            raise CorpusFormatError(path, line_no, f"malformed pair entry {entry!r}")
        label = schema.canonical_word_label(str(entry["label"]))
        if label is None:
            raise SampleValidationError(
                sample_id,
                f"pair label {entry['label']!r} is not one of {list(schema.word_labels)}",
            )
        span = nfc(str(entry["span"])).strip()
        try:
            pairs.append(LabelSpanPair(label, span))
        except CorpusError as exc:
            raise SampleValidationError(sample_id, str(exc)) from exc
    return MixedSample(sample_id, text, text_label, tuple(pairs), schema.task_id)


def load_corpus(path: str | Path, schema: TaskSchema) -> list[MixedSample]:
    """Read and validate a JSONL corpus, preserving file order.

    Unknown fields are ignored with a warning (once per field name per file).
    Sample ids must be unique: plans, transcripts and resume logic key on them.
    """
    path = Path(path)
    samples: list[MixedSample] = []
    seen_ids: set[str] = set()
    warned_fields: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise CorpusFormatError(path, line_no, "line is not a JSON object")
            for field_name in record:
                if field_name not in KNOWN_RECORD_FIELDS and field_name not in warned_fields:
                    warned_fields.add(field_name)
                    logger.warning("%s: ignoring unknown corpus field %r", path, field_name)
            for entry in record.get("pairs") or []:
                if isinstance(entry, dict):
                    for field_name in entry:
                        if field_name not in KNOWN_PAIR_FIELDS and field_name not in warned_fields:
                            warned_fields.add(field_name)
                            logger.warning("%s: ignoring unknown pair field %r", path, field_name)
            sample = _validate_record(record, schema, path, line_no)
            if sample.sample_id in seen_ids:
                raise SampleValidationError(sample.sample_id, "duplicate sample id")
            seen_ids.add(sample.sample_id)
            samples.append(sample)
    return samples


def save_corpus(samples: Iterable[MixedSample], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.as_dict(), ensure_ascii=False) + "\n")


def dumps_sample(sample: MixedSample) -> str:
    return json.dumps(sample.as_dict(), ensure_ascii=False)


def fixture_text_label(schema: TaskSchema, pair_labels: Iterable[str]) -> str:
    """Fixture convention: the text label with the most votes among the pair
    labels wins; every tie (including zero votes) resolves to the earliest
    member of schema.text_labels."""
    votes = Counter(label for label in pair_labels)
    best = schema.text_labels[0]
    best_votes = votes.get(best, 0)
    for candidate in schema.text_labels[1:]:
        if votes.get(candidate, 0) > best_votes:
            best = candidate
            best_votes = votes[candidate]
    return best


_FIXTURE_VOCAB = (
    "arbor", "basket", "cedar", "dorayaki", "ember", "fountain", "garnet",
    "harbor", "ivory", "juniper", "kettle", "lantern", "meadow", "noodle",
    "orchid", "pebble", "quince", "ramen", "saffron", "tangerine", "umbrella",
    "violet", "walnut", "yuzu", "zephyr", "bridge", "cloud", "dune", "echo",
    "forge", "glacier", "harvest", "island", "jade", "kiln", "lagoon",
)


def gen_fixtures(schema: TaskSchema, n: int, seed: int) -> list[MixedSample]:
    """Deterministic synthetic corpus for a schema.

    Every gold span occurs verbatim in the sample text, and the text label is
    derived from the pair labels via `fixture_text_label`, so an extractor
    that reproduces the gold annotations scores a perfect run.
    """
    from .sampling import SplitMix64

    if n <= 0:
        raise CorpusError("fixture count must be positive")
    rng = SplitMix64(seed)
    vocab = _FIXTURE_VOCAB
    samples = []
    for i in range(n):
        pair_count = 1 + rng.bounded(4)
        pairs = []
        for _ in range(pair_count):
            label = schema.word_labels[rng.bounded(len(schema.word_labels))]
            span = vocab[rng.bounded(len(vocab))]
            if rng.bounded(2):
                span = f"{span} {vocab[rng.bounded(len(vocab))]}"
            pairs.append(LabelSpanPair(label, span))
        distinct_spans = list(dict.fromkeys(p.span for p in pairs))
        text = (
            f"Entry {i:05d} mentions " + " and ".join(distinct_spans) +
            " in a short field note."
        )
        samples.append(
            MixedSample(
                sample_id=f"{schema.task_id.lower()}-{i:05d}",
                text=text,
                text_label=fixture_text_label(schema, (p.label for p in pairs)),
                gold_pairs=tuple(pairs),
                task_id=schema.task_id,
            )
        )
    return samples
