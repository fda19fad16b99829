"""Experiment orchestration: plans, prompts, completions, scores, reports.

For every (dataset, strategy, seed) the runner draws a plan, builds prompts,
resolves completions through the configured backend, and appends one JSONL
record per sample to a transcript file. Transcripts are the source of truth:
aggregation re-parses and re-scores the stored raw responses, so `score` can
rebuild every report cell offline and an interrupted run resumes by skipping
sample ids already present in its transcript.

Results are keyed by sample id and written in plan order, never in completion
arrival order, so any parallelism level produces identical artifacts.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import yaml

from .backend import (
    BackendConfig,
    Cassette,
    LLMClient,
    TransportError,
    request_fingerprint,
)
from .corpus import MixedSample, TaskSchema, load_corpus, load_schema_registry
from .metrics import SampleScore, aggregate, score_sample
from .parsing import parse_answer
from .prompts import (
    DEFAULT_SEPARATOR,
    PromptTemplate,
    Strategy,
    as_messages,
    build_prompt,
    expected_answer,
    load_template,
)
from .sampling import SamplePlan, draw_plan

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (42, 123123, 678910)
DEFAULT_SAMPLE_COUNT = 1000
ALL_SAMPLES = "all"


class RunnerError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    task_id: str
    corpus_path: str
    sample_count: int | str | None = None  # int, "all", or None for the global default
    exemplar_ids: tuple[str, ...] | None = None


@dataclass
class ExperimentConfig:
    datasets: list[DatasetSpec]
    strategies: list[Strategy]
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    sample_count: int | str = DEFAULT_SAMPLE_COUNT
    backend: BackendConfig = field(default_factory=BackendConfig)
    mode: str = "replay"
    parallelism: int = 1
    output_dir: str = "out"
    cassette_path: str | None = None
    template_language: str = "en"
    template_dir: str | None = None
    separator: str = DEFAULT_SEPARATOR
    per_seed_draw: bool = False
    empty_gold_ls_one: bool = False
    split_exemplar_turns: bool = False
    schema_registry_path: str | None = None

    def __post_init__(self):
        if not self.datasets:
            raise RunnerError("config lists no datasets")
        if not self.strategies:
            raise RunnerError("config lists no strategies")
        if not self.seeds:
            raise RunnerError("config lists no seeds")
        if len(set(self.seeds)) != len(self.seeds):
            raise RunnerError("seeds must be duplicate-free")
        if isinstance(self.sample_count, int) and self.sample_count <= 0:
            raise RunnerError("sample_count must be positive")
        if self.mode not in ("live", "record", "replay"):
            raise RunnerError(f"unknown mode {self.mode!r}")
        if self.parallelism < 1:
            raise RunnerError("parallelism must be >= 1")


@dataclass(frozen=True)
class ReportCell:
    task_id: str
    dataset: str
    strategy: Strategy
    tc: float
    ls: float | None
    total: float | None
    n_samples: int
    n_runs: int
    failed_samples: int = 0

    def as_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "dataset": self.dataset,
            "strategy": self.strategy.display_name,
            "strategy_key": self.strategy.value,
            "tc": self.tc,
            "ls": self.ls,
            "total": self.total,
            "n_samples": self.n_samples,
            "n_runs": self.n_runs,
            "failed_samples": self.failed_samples,
        }


@dataclass(frozen=True)
class RunReport:
    cells: tuple[ReportCell, ...]
    provenance: dict

    def as_dict(self) -> dict:
        return {
            "cells": [cell.as_dict() for cell in self.cells],
            "provenance": self.provenance,
        }


def _resolve_count(spec: DatasetSpec, config: ExperimentConfig, corpus_size: int) -> int:
    raw = spec.sample_count if spec.sample_count is not None else config.sample_count
    if raw == ALL_SAMPLES:
        return corpus_size
    count = int(raw)
    if count <= 0:
        raise RunnerError(f"{spec.task_id}: sample_count must be positive")
    return count


def _load_transcript(path: Path) -> dict[str, dict]:
    """Existing transcript records keyed by sample id.

    A trailing half-written line (interrupted run) is dropped; corruption
    anywhere else is an error.
    """
    records: dict[str, dict] = {}
    if not path.exists():
        return records
    lines = path.read_text(encoding="utf-8").splitlines()
    last_content = len(lines) - 1
    while last_content >= 0 and not lines[last_content].strip():
        last_content -= 1
    for idx, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            if idx == last_content:
                logger.warning("%s: dropping truncated final line", path)
                continue
            raise RunnerError(f"{path}, line {idx + 1}: corrupt transcript line")
        records[record["sample_id"]] = record
    return records


def _transcript_record(
    sample: MixedSample,
    schema: TaskSchema,
    fingerprint: str,
    raw: str | None,
    error: str | None,
    empty_gold_ls_one: bool,
) -> dict:
    if error is not None:
        return {
            "sample_id": sample.sample_id,
            "fingerprint": fingerprint,
            "raw": "",
            "failed": True,
            "error": error,
            "text_label": None,
            "pairs": [],
            "diagnostics": [f"completion failed: {error}"],
            "tc_acc": 0.0,
            "ls_acc": 0.0,
            "total_acc": 0.0,
        }
    parsed = parse_answer(raw, schema)
    score = score_sample(parsed, sample, empty_gold_ls_one)
    return {
        "sample_id": sample.sample_id,
        "fingerprint": fingerprint,
        "raw": raw,
        "failed": False,
        "error": None,
        "text_label": parsed.text_label,
        "pairs": [p.as_dict() for p in parsed.pairs],
        "diagnostics": list(parsed.diagnostics),
        "tc_acc": score.tc_acc,
        "ls_acc": score.ls_acc,
        "total_acc": score.total_acc,
    }


class _DatasetContext:
    def __init__(self, spec: DatasetSpec, config: ExperimentConfig,
                 schema: TaskSchema, base_dir: Path):
        self.spec = spec
        self.schema = schema
        corpus_path = Path(spec.corpus_path)
        if not corpus_path.is_absolute():
            corpus_path = base_dir / corpus_path
        self.corpus_path = corpus_path
        self.corpus = load_corpus(corpus_path, schema)
        self.by_id = {s.sample_id: s for s in self.corpus}
        self.count = _resolve_count(spec, config, len(self.corpus))
        template_dir = config.template_dir
        if template_dir is not None and not Path(template_dir).is_absolute():
            template_dir = base_dir / template_dir
        self.templates = {
            strategy: load_template(
                language=config.template_language,
                search_dir=template_dir,
                task_id=spec.task_id,
                strategy=strategy,
            )
            for strategy in config.strategies
        }
        if config.per_seed_draw:
            self.plans = {
                seed: draw_plan(self.corpus, schema, seed, self.count, spec.exemplar_ids)
                for seed in config.seeds
            }
        else:
            shared = draw_plan(
                self.corpus, schema, config.seeds[0], self.count, spec.exemplar_ids
            )
            self.plans = {seed: shared for seed in config.seeds}

    def exemplars(self, plan: SamplePlan) -> list[MixedSample]:
        return [self.by_id[i] for i in plan.exemplar_ids]


def run_experiment(config: ExperimentConfig, base_dir: str | Path = ".") -> RunReport:
    """Execute (or resume) the full experiment and write report artifacts.

    `base_dir` anchors relative paths from the config (corpus files, cassette,
    output directory); the CLI passes the config file's directory.
    """
    base_dir = Path(base_dir)
    output_dir = Path(config.output_dir)
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir
    transcripts_dir = output_dir / "transcripts"
    transcripts_dir.mkdir(parents=True, exist_ok=True)

    cassette = None
    if config.mode in ("record", "replay"):
        if not config.cassette_path:
            raise RunnerError(f"{config.mode} mode requires a cassette path")
        cassette_path = Path(config.cassette_path)
        if not cassette_path.is_absolute():
            cassette_path = base_dir / cassette_path
        cassette = Cassette(cassette_path, config.backend.model_name)

    registry = load_schema_registry(config.schema_registry_path)
    contexts: list[_DatasetContext] = []
    for spec in config.datasets:
        if spec.task_id not in registry:
            raise RunnerError(f"unknown task {spec.task_id!r}")
        contexts.append(_DatasetContext(spec, config, registry[spec.task_id], base_dir))

    cells: list[ReportCell] = []
    with LLMClient(config.backend, config.mode, cassette) as client:
        for ctx in contexts:
            for strategy in config.strategies:
                cells.append(
                    _run_cell(ctx, strategy, config, client, transcripts_dir)
                )

    provenance = _provenance(config, contexts, cassette)
    report = RunReport(tuple(cells), provenance)
    _write_manifest(output_dir, config, contexts)
    write_report_files(report, output_dir)
    return report


def _run_cell(
    ctx: _DatasetContext,
    strategy: Strategy,
    config: ExperimentConfig,
    client: LLMClient,
    transcripts_dir: Path,
) -> ReportCell:
    runs: list[list[SampleScore]] = []
    failed_total = 0
    template = ctx.templates[strategy]
    for seed in config.seeds:
        plan = ctx.plans[seed]
        exemplars = ctx.exemplars(plan)
        path = transcripts_dir / f"{ctx.spec.task_id}.{strategy.value}.{seed}.jsonl"
        records = _load_transcript(path)
        pending = [sid for sid in plan.drawn_ids if sid not in records]
        if pending:
            logger.info(
                "%s/%s seed %d: %d of %d samples pending",
                ctx.spec.task_id, strategy.value, seed, len(pending), len(plan.drawn_ids),
            )

            def fetch(sid: str) -> dict:
                sample = ctx.by_id[sid]
                bundle = build_prompt(
                    strategy, template, ctx.schema, exemplars, sample,
                    config.separator,
                )
                messages = as_messages(bundle, config.split_exemplar_turns)
                fp = request_fingerprint(
                    config.backend.model_name, config.backend.temperature, messages
                )
                try:
                    completion = client.complete(messages)
                except TransportError as exc:
                    return _transcript_record(
                        sample, ctx.schema, fp, None, str(exc), config.empty_gold_ls_one
                    )
                return _transcript_record(
                    sample, ctx.schema, completion.request_fingerprint,
                    completion.response_text, None, config.empty_gold_ls_one,
                )

            with path.open("a", encoding="utf-8") as out, \
                    ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                for record in pool.map(fetch, pending):
                    out.write(json.dumps(record, ensure_ascii=False) + "\n")
                    out.flush()
                    records[record["sample_id"]] = record

        scores: list[SampleScore] = []
        for sid in plan.drawn_ids:
            record = records[sid]
            if record.get("failed"):
                failed_total += 1
                scores.append(SampleScore(0.0, 0.0, 0.0))
            else:
                parsed = parse_answer(record["raw"], ctx.schema)
                scores.append(
                    score_sample(parsed, ctx.by_id[sid], config.empty_gold_ls_one)
                )
        runs.append(scores)

    agg = aggregate(runs)
    return ReportCell(
        task_id=ctx.spec.task_id,
        dataset=ctx.schema.display_name,
        strategy=strategy,
        tc=agg.tc,
        ls=agg.ls if strategy.produces_pairs else None,
        total=agg.total if strategy.produces_pairs else None,
        n_samples=agg.n_samples,
        n_runs=agg.n_runs,
        failed_samples=failed_total,
    )


def _provenance(
    config: ExperimentConfig,
    contexts: list[_DatasetContext],
    cassette: Cassette | None,
) -> dict:
    return {
        "mode": config.mode,
        "seeds": list(config.seeds),
        "strategies": [s.value for s in config.strategies],
        "per_seed_draw": config.per_seed_draw,
        "empty_gold_ls_one": config.empty_gold_ls_one,
        "split_exemplar_turns": config.split_exemplar_turns,
        "separator": config.separator,
        "template_language": config.template_language,
        "model_name": config.backend.model_name,
        "temperature": config.backend.temperature,
        "cassette_sha256": cassette.sha256() if cassette is not None else None,
        "datasets": {
            ctx.spec.task_id: {
                "sample_count": ctx.count,
                "corpus_size": len(ctx.corpus),
                "template_sha256": {
                    strategy.value: template.digest()
                    for strategy, template in ctx.templates.items()
                },
                "plan_fingerprints": {
                    str(seed): plan.fingerprint() for seed, plan in ctx.plans.items()
                },
            }
            for ctx in contexts
        },
    }


def _write_manifest(
    output_dir: Path, config: ExperimentConfig, contexts: list[_DatasetContext]
) -> None:
    manifest = {
        "seeds": list(config.seeds),
        "strategies": [s.value for s in config.strategies],
        "empty_gold_ls_one": config.empty_gold_ls_one,
        "per_seed_draw": config.per_seed_draw,
        "template_language": config.template_language,
        "datasets": [
            {
                "task_id": ctx.spec.task_id,
                "corpus_path": str(ctx.corpus_path.resolve()),
                "plans": {
                    str(seed): {
                        "exemplar_ids": list(plan.exemplar_ids),
                        "drawn_ids": list(plan.drawn_ids),
                    }
                    for seed, plan in ctx.plans.items()
                },
            }
            for ctx in contexts
        ],
    }
    (output_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def rescore_from_transcripts(output_dir: str | Path) -> RunReport:
    """Rebuild every report cell from persisted transcripts, offline."""
    output_dir = Path(output_dir)
    manifest_path = output_dir / "manifest.json"
    if not manifest_path.exists():
        raise RunnerError(f"no manifest.json under {output_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    registry = load_schema_registry()
    transcripts_dir = output_dir / "transcripts"
    empty_gold = bool(manifest.get("empty_gold_ls_one", False))

    cells: list[ReportCell] = []
    for entry in manifest["datasets"]:
        task_id = entry["task_id"]
        schema = registry[task_id]
        corpus = load_corpus(entry["corpus_path"], schema)
        by_id = {s.sample_id: s for s in corpus}
        for strategy_key in manifest["strategies"]:
            strategy = Strategy.parse(strategy_key)
            runs: list[list[SampleScore]] = []
            failed_total = 0
            for seed in manifest["seeds"]:
                plan = entry["plans"][str(seed)]
                path = transcripts_dir / f"{task_id}.{strategy.value}.{seed}.jsonl"
                records = _load_transcript(path)
                scores = []
                for sid in plan["drawn_ids"]:
                    if sid not in records:
                        raise RunnerError(
                            f"{path}: missing transcript for sample {sid!r}"
                        )
                    record = records[sid]
                    if record.get("failed"):
                        failed_total += 1
                        scores.append(SampleScore(0.0, 0.0, 0.0))
                    else:
                        parsed = parse_answer(record["raw"], schema)
                        scores.append(score_sample(parsed, by_id[sid], empty_gold))
                runs.append(scores)
            agg = aggregate(runs)
            cells.append(
                ReportCell(
                    task_id=task_id,
                    dataset=schema.display_name,
                    strategy=strategy,
                    tc=agg.tc,
                    ls=agg.ls if strategy.produces_pairs else None,
                    total=agg.total if strategy.produces_pairs else None,
                    n_samples=agg.n_samples,
                    n_runs=agg.n_runs,
                    failed_samples=failed_total,
                )
            )
    return RunReport(tuple(cells), {"rescored_from": "transcripts"})


# ---------------------------------------------------------------------------
# Report rendering


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def emit_report(report: RunReport, fmt: str = "table") -> str:
    if fmt == "table":
        return _emit_table(report)
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "json":
        return json.dumps(report.as_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    raise RunnerError(f"unknown report format {fmt!r}")


def _emit_table(report: RunReport) -> str:
    lines = ["Accuracy by dataset and strategy (percent)"]
    by_dataset: dict[str, list[ReportCell]] = {}
    for cell in report.cells:
        by_dataset.setdefault(cell.dataset, []).append(cell)
    for dataset, cells in by_dataset.items():
        lines.append("")
        lines.append(f"{dataset:<16}{'TC':>9}{'LS':>9}{'Total':>9}")
        for cell in cells:
            lines.append(
                f"  {cell.strategy.display_name:<14}"
                f"{_fmt(cell.tc):>9}{_fmt(cell.ls):>9}{_fmt(cell.total):>9}"
            )
    return "\n".join(lines) + "\n"


def _emit_csv(report: RunReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["dataset", "strategy", "tc", "ls", "total", "n_samples", "n_runs"])
    for cell in report.cells:
        writer.writerow(
            [
                cell.dataset,
                cell.strategy.display_name,
                repr(cell.tc),
                "" if cell.ls is None else repr(cell.ls),
                "" if cell.total is None else repr(cell.total),
                cell.n_samples,
                cell.n_runs,
            ]
        )
    return buffer.getvalue()


def load_report_csv(text: str) -> list[dict]:
    """Parse emit_report(..., "csv") output back into value dicts."""
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    for row in reader:
        rows.append(
            {
                "dataset": row["dataset"],
                "strategy": row["strategy"],
                "tc": float(row["tc"]),
                "ls": float(row["ls"]) if row["ls"] else None,
                "total": float(row["total"]) if row["total"] else None,
                "n_samples": int(row["n_samples"]),
                "n_runs": int(row["n_runs"]),
            }
        )
    return rows


def write_report_files(report: RunReport, output_dir: str | Path) -> None:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / "report.json").write_text(emit_report(report, "json"), encoding="utf-8")
    (output_dir / "report.csv").write_text(emit_report(report, "csv"), encoding="utf-8")
    (output_dir / "report.txt").write_text(emit_report(report, "table"), encoding="utf-8")


# ---------------------------------------------------------------------------
# Config file loading


def _backend_from_dict(raw: dict) -> BackendConfig:
    known = {
        "endpoint_url", "model_name", "temperature", "max_tokens",
        "timeout_s", "max_retries", "api_key_env", "requests_per_minute",
    }
    unknown = set(raw) - known
    if unknown:
        raise RunnerError(f"unknown backend settings {sorted(unknown)}")
    return BackendConfig(**raw)


def load_experiment_config(path: str | Path) -> tuple[ExperimentConfig, Path]:
    """Parse a YAML experiment config; returns (config, base_dir).

    Relative paths inside the file are interpreted relative to the file.
    """
    path = Path(path)
    raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise RunnerError(f"{path}: config must be a mapping")

    datasets = []
    for entry in raw.get("datasets", []):
        if not isinstance(entry, dict) or "task" not in entry or "corpus" not in entry:
            raise RunnerError(
                f"{path}: each dataset needs 'task' and 'corpus' keys, got {entry!r}"
            )
        datasets.append(
            DatasetSpec(
                task_id=entry["task"],
                corpus_path=entry["corpus"],
                sample_count=entry.get("sample_count"),
                exemplar_ids=tuple(entry["exemplar_ids"]) if entry.get("exemplar_ids") else None,
            )
        )
    strategies = [Strategy.parse(s) for s in raw.get("strategies", [])]
    template = raw.get("template") or {}

    config = ExperimentConfig(
        datasets=datasets,
        strategies=strategies,
        seeds=list(raw.get("seeds", DEFAULT_SEEDS)),
        sample_count=raw.get("sample_count", DEFAULT_SAMPLE_COUNT),
        backend=_backend_from_dict(raw.get("backend") or {}),
        mode=raw.get("mode", "replay"),
        parallelism=int(raw.get("parallelism", 1)),
        output_dir=raw.get("output_dir", "out"),
        cassette_path=raw.get("cassette"),
        template_language=template.get("language", "en"),
        template_dir=template.get("dir"),
        separator=raw.get("separator", DEFAULT_SEPARATOR),
        per_seed_draw=bool(raw.get("per_seed_draw", False)),
        empty_gold_ls_one=bool(raw.get("empty_gold_ls_one", False)),
        split_exemplar_turns=bool(raw.get("split_exemplar_turns", False)),
        schema_registry_path=raw.get("schema_registry"),
    )
    return config, path.parent


# ---------------------------------------------------------------------------
# Cassette construction from a known-good answerer


def build_oracle_cassette(
    cassette_path: str | Path,
    corpus: Sequence[MixedSample],
    schema: TaskSchema,
    template: PromptTemplate,
    strategies: Sequence[Strategy],
    plans: Sequence[SamplePlan],
    backend: BackendConfig,
    separator: str = DEFAULT_SEPARATOR,
    split_exemplar_turns: bool = False,
    answer_fn: Callable[[MixedSample, Strategy], str] | None = None,
) -> Cassette:
    """Record a cassette whose answers come from `answer_fn`.

    The default answerer returns each sample's gold answer, which closes the
    loop: replaying such a cassette through the full pipeline must produce
    perfect scores. Supplying a custom `answer_fn` builds degraded cassettes
    for regression fixtures.
    """
    if answer_fn is None:
        def answer_fn(sample: MixedSample, strategy: Strategy) -> str:
            return expected_answer(strategy, template, sample)

    cassette = Cassette(cassette_path, backend.model_name)
    by_id = {s.sample_id: s for s in corpus}
    for strategy in strategies:
        for plan in plans:
            exemplars = [by_id[i] for i in plan.exemplar_ids]
            for sid in plan.drawn_ids:
                sample = by_id[sid]
                bundle = build_prompt(
                    strategy, template, schema, exemplars, sample, separator
                )
                messages = as_messages(bundle, split_exemplar_turns)
                fp = request_fingerprint(backend.model_name, backend.temperature, messages)
                cassette.record(fp, answer_fn(sample, strategy), backend.model_name)
    return cassette
