"""Harness for evaluating word-first prompting strategies.

The pipeline: seeded sample plans over mixed word/text-label corpora, prompt
assembly per strategy, chat completions with record/replay cassettes,
format-tolerant response extraction, and three-tier accuracy reporting.
"""

from .backend import (
    BackendConfig,
    Cassette,
    Completion,
    LLMClient,
    ReplayMissError,
    TransportError,
    request_fingerprint,
)
from .corpus import (
    CorpusError,
    LabelSpanPair,
    MixedSample,
    TaskSchema,
    gen_fixtures,
    get_task_schema,
    load_corpus,
    load_schema_registry,
    save_corpus,
)
from .metrics import AggregateScore, SampleScore, aggregate, score_sample
from .parsing import ParsedAnswer, extract_text_label, parse_answer, parse_pairs
from .prompts import (
    PromptBundle,
    PromptTemplate,
    Strategy,
    as_messages,
    build_prompt,
    expected_answer,
    load_template,
    render_pairs,
)
from .runner import (
    DatasetSpec,
    ExperimentConfig,
    ReportCell,
    RunReport,
    build_oracle_cassette,
    emit_report,
    load_experiment_config,
    rescore_from_transcripts,
    run_experiment,
)
from .sampling import SamplePlan, SplitMix64, draw_plan

__version__ = "0.1.0"

__all__ = [
    "AggregateScore",
    "BackendConfig",
    "Cassette",
    "Completion",
    "CorpusError",
    "DatasetSpec",
    "ExperimentConfig",
    "LLMClient",
    "LabelSpanPair",
    "MixedSample",
    "ParsedAnswer",
    "PromptBundle",
    "PromptTemplate",
    "ReplayMissError",
    "ReportCell",
    "RunReport",
    "SamplePlan",
    "SampleScore",
    "SplitMix64",
    "Strategy",
    "TaskSchema",
    "TransportError",
    "aggregate",
    "as_messages",
    "build_oracle_cassette",
    "build_prompt",
    "draw_plan",
    "emit_report",
    "expected_answer",
    "extract_text_label",
    "gen_fixtures",
    "get_task_schema",
    "load_corpus",
    "load_experiment_config",
    "load_schema_registry",
    "load_template",
    "parse_answer",
    "parse_pairs",
    "render_pairs",
    "request_fingerprint",
    "rescore_from_transcripts",
    "run_experiment",
    "save_corpus",
    "score_sample",
]
