"""Prompt assembly for the three evaluated strategies.

A prompt bundle is an ordered sequence of text blocks: for each exemplar shot
the exemplar text, the instruction question and the exemplar's gold answer,
then the target text and the same instruction question again. With one shot
that is five blocks; generally 3 * icl_shots + 2.

Strategies differ only in the question and answer blocks:

* BASELINE_ICL_IL asks directly for the text-level label.
* TFW asks for label-span pairs first, then the text-level label; exemplar
  answers show the pairs line followed by the label.
* TFW_EXTRA replaces the extraction instruction with the sample's own gold
  pairs embedded in the question; answers carry the label only.

Wording lives in template files, never in code, so every test treats prompt
text as data.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .corpus import LabelSpanPair, MixedSample, TaskSchema

DEFAULT_SEPARATOR = "\n\n"


class PromptError(ValueError):
    """Template or bundle construction failure."""


class Strategy(Enum):
    BASELINE_ICL_IL = "BASELINE_ICL_IL"
    TFW = "TFW"
    TFW_EXTRA = "TFW_EXTRA"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @property
    def produces_pairs(self) -> bool:
        """Whether model responses are expected to contain label-span pairs."""
        return self is Strategy.TFW

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        key = name.strip().upper().replace(" ", "_").replace("-", "_")
        aliases = {
            "ICL+IL": cls.BASELINE_ICL_IL,
            "BASELINE": cls.BASELINE_ICL_IL,
            "BASELINE_ICL_IL": cls.BASELINE_ICL_IL,
            "TFW": cls.TFW,
            "TFW_EXTRA": cls.TFW_EXTRA,
        }
        if key in aliases:
            return aliases[key]
        raise PromptError(f"unknown strategy {name!r}")


_DISPLAY_NAMES = {
    Strategy.BASELINE_ICL_IL: "ICL+IL",
    Strategy.TFW: "TFW",
    Strategy.TFW_EXTRA: "TFW Extra",
}


def render_pairs(pairs: Iterable[LabelSpanPair]) -> str:
    """Serialize pairs as `:label;span` units concatenated in order."""
    return "".join(f":{p.label};{p.span}" for p in pairs)


_TEMPLATE_FIELDS = {
    "question_stage1": ("{word_label_list}", "{pair_example}"),
    "question_stage2": ("{text_label_list}",),
    "answer_format": ("{pairs_line}", "{text_label}"),
    "extra_injection": ("{gold_pairs}",),
}


@dataclass(frozen=True)
class PromptTemplate:
    """Question and answer wording with schema placeholders."""

    question_stage1: str
    question_stage2: str
    answer_format: str
    extra_injection: str
    example_span: str = "sample"

    def __post_init__(self):
        for field_name, placeholders in _TEMPLATE_FIELDS.items():
            value = getattr(self, field_name)
            for placeholder in placeholders:
                if value.count(placeholder) != 1:
                    raise PromptError(
                        f"template field {field_name!r} must contain {placeholder} "
                        f"exactly once (found {value.count(placeholder)})"
                    )

    def digest(self) -> str:
        payload = "\x1e".join(
            (self.question_stage1, self.question_stage2,
             self.answer_format, self.extra_injection, self.example_span)
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _fill(template_text: str, values: dict) -> str:
    try:
        return template_text.format_map(values)
    except KeyError as exc:
        raise PromptError(f"unresolved template placeholder {exc.args[0]!r}") from exc
    except (IndexError, ValueError) as exc:
        raise PromptError(f"malformed template placeholder ({exc})") from exc


def load_template(
    language: str = "en",
    path: str | Path | None = None,
    search_dir: str | Path | None = None,
    task_id: str | None = None,
    strategy: Strategy | None = None,
) -> PromptTemplate:
    """Load a template file, most specific match first.

    With `search_dir` set, candidates are tried in the order
    `<task>.<strategy>.<lang>.yaml`, `<strategy>.<lang>.yaml`,
    `<task>.<lang>.yaml`, `<lang>.yaml`; otherwise the packaged default for
    `language` is used. An explicit `path` short-circuits the search.
    """
    if path is not None:
        return _template_from_text(Path(path).read_text("utf-8"), str(path))
    if search_dir is not None:
        search_dir = Path(search_dir)
        names = []
        strat = strategy.value if strategy is not None else None
        if task_id and strat:
            names.append(f"{task_id}.{strat}.{language}.yaml")
        if strat:
            names.append(f"{strat}.{language}.yaml")
        if task_id:
            names.append(f"{task_id}.{language}.yaml")
        names.append(f"{language}.yaml")
        for name in names:
            candidate = search_dir / name
            if candidate.exists():
                return _template_from_text(candidate.read_text("utf-8"), str(candidate))
        raise PromptError(f"no template for language {language!r} under {search_dir}")
    packaged = resources.files("tfweval").joinpath(f"templates/{language}.yaml")
    try:
        text = packaged.read_text("utf-8")
    except FileNotFoundError:
        raise PromptError(f"no packaged template for language {language!r}") from None
    return _template_from_text(text, f"templates/{language}.yaml")


def _template_from_text(text: str, origin: str) -> PromptTemplate:
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise PromptError(f"{origin}: template file must be a mapping")
    known = set(_TEMPLATE_FIELDS) | {"example_span"}
    unknown = set(data) - known
    if unknown:
        raise PromptError(f"{origin}: unknown template keys {sorted(unknown)}")
    missing = set(_TEMPLATE_FIELDS) - set(data)
    if missing:
        raise PromptError(f"{origin}: missing template keys {sorted(missing)}")
    return PromptTemplate(**{k: str(v) for k, v in data.items()})


@dataclass(frozen=True)
class PromptBundle:
    """The ordered blocks of one rendered prompt."""

    parts: tuple[str, ...]
    strategy: Strategy
    sample_id: str
    separator: str
    rendered: str

    @property
    def block_count(self) -> int:
        return len(self.parts)


def question_for(
    strategy: Strategy,
    template: PromptTemplate,
    schema: TaskSchema,
    sample: MixedSample,
) -> str:
    """The instruction question block for one sample under a strategy."""
    stage2 = _fill(
        template.question_stage2,
        {"text_label_list": ", ".join(schema.text_labels)},
    )
    if strategy is Strategy.BASELINE_ICL_IL:
        return stage2
    if strategy is Strategy.TFW:
        stage1 = _fill(
            template.question_stage1,
            {
                "word_label_list": ", ".join(schema.word_labels),
                "pair_example": render_pairs(
                    [LabelSpanPair(schema.word_labels[0], template.example_span)]
                ),
            },
        )
        return stage1 + "\n" + stage2
    injection = _fill(
        template.extra_injection,
        {"gold_pairs": render_pairs(sample.gold_pairs)},
    )
    return injection + "\n" + stage2


def expected_answer(
    strategy: Strategy, template: PromptTemplate, sample: MixedSample
) -> str:
    """The gold answer block for a sample.

    TFW shows the pairs line then the text label per the answer format (a
    sample without pairs keeps the empty first line); the other strategies
    answer with the text label alone.
    """
    if strategy is Strategy.TFW:
        return _fill(
            template.answer_format,
            {
                "pairs_line": render_pairs(sample.gold_pairs),
                "text_label": sample.text_label,
            },
        )
    return sample.text_label


def build_prompt(
    strategy: Strategy,
    template: PromptTemplate,
    schema: TaskSchema,
    exemplars: Sequence[MixedSample],
    target: MixedSample,
    separator: str = DEFAULT_SEPARATOR,
) -> PromptBundle:
    """Assemble the block sequence for one target sample.

    Deterministic: identical inputs always produce an identical rendered
    string. The closing question repeats the exemplar question exactly,
    except that TFW_EXTRA embeds each sample's own gold pairs.
    """
    if len(exemplars) != schema.icl_shots:
        raise PromptError(
            f"{schema.task_id} needs {schema.icl_shots} exemplar(s), got {len(exemplars)}"
        )
    exemplar_ids = {e.sample_id for e in exemplars}
    if target.sample_id in exemplar_ids:
        raise PromptError(f"target {target.sample_id!r} is also an exemplar")

    parts: list[str] = []
    for exemplar in exemplars:
        parts.append(exemplar.text)
        parts.append(question_for(strategy, template, schema, exemplar))
        parts.append(expected_answer(strategy, template, exemplar))
    parts.append(target.text)
    parts.append(question_for(strategy, template, schema, target))

    return PromptBundle(
        parts=tuple(parts),
        strategy=strategy,
        sample_id=target.sample_id,
        separator=separator,
        rendered=separator.join(parts),
    )


def as_messages(bundle: PromptBundle, split_exemplar_turns: bool = False) -> list[dict]:
    """Chat-message view of a bundle.

    Default: the whole rendered prompt as a single user message. With
    `split_exemplar_turns`, each exemplar becomes a user/assistant exchange
    and the target text plus question the final user turn.
    """
    if not split_exemplar_turns:
        return [{"role": "user", "content": bundle.rendered}]
    shots = (len(bundle.parts) - 2) // 3
    sep = bundle.separator
    messages: list[dict] = []
    for i in range(shots):
        text_block, question, answer = bundle.parts[3 * i: 3 * i + 3]
        messages.append({"role": "user", "content": text_block + sep + question})
        messages.append({"role": "assistant", "content": answer})
    messages.append({"role": "user", "content": bundle.parts[-2] + sep + bundle.parts[-1]})
    return messages
