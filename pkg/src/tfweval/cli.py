"""Command-line entry points.

    tfweval run --config cfg.yaml [--mode live|record|replay]
                [--strategy S]... [--seed N]... [--dataset D]...
    tfweval score --transcripts OUTPUT_DIR [--format table|csv|json]
    tfweval replay-verify --cassette FILE
    tfweval gen-fixtures --task ID --n COUNT --seed N [--out FILE]

Exit code 0 on success, 1 on any abort, with the reason on stderr.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backend import BackendError, Cassette
from .corpus import CorpusError, gen_fixtures, get_task_schema, dumps_sample
from .prompts import PromptError, Strategy
from .runner import (
    DatasetSpec,
    RunnerError,
    emit_report,
    load_experiment_config,
    rescore_from_transcripts,
    run_experiment,
)
from .sampling import PlanError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfweval",
        description="Evaluate word-first prompting strategies over mixed-label corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run (or resume) an experiment")
    run.add_argument("--config", required=True, help="YAML experiment config")
    run.add_argument("--mode", choices=["live", "record", "replay"],
                     help="override the config mode")
    run.add_argument("--strategy", action="append", default=None,
                     help="restrict to a strategy (repeatable)")
    run.add_argument("--seed", action="append", type=int, default=None,
                     help="restrict to a seed (repeatable)")
    run.add_argument("--dataset", action="append", default=None,
                     help="restrict to a task id (repeatable)")
    run.add_argument("--exemplar-id", action="append", default=None,
                     help="pin the exemplar sample ids instead of drawing them "
                          "(repeatable; applies to every selected dataset)")
    run.add_argument("--output-dir", help="override the config output directory")
    run.add_argument("--format", choices=["table", "csv", "json"], default="table",
                     help="report format printed to stdout")

    score = sub.add_parser("score", help="re-score persisted transcripts offline")
    score.add_argument("--transcripts", required=True,
                       help="experiment output directory (holds manifest.json)")
    score.add_argument("--format", choices=["table", "csv", "json"], default="table")

    verify = sub.add_parser("replay-verify", help="check a cassette file")
    verify.add_argument("--cassette", required=True)

    fixtures = sub.add_parser("gen-fixtures", help="emit a synthetic JSONL corpus")
    fixtures.add_argument("--task", required=True)
    fixtures.add_argument("--n", required=True, type=int)
    fixtures.add_argument("--seed", required=True, type=int)
    fixtures.add_argument("--out", help="output path (default stdout)")
    return parser


def _cmd_run(args) -> int:
    config, base_dir = load_experiment_config(args.config)
    if args.mode:
        config.mode = args.mode
    if args.output_dir:
        config.output_dir = args.output_dir
    if args.strategy:
        wanted = {Strategy.parse(s) for s in args.strategy}
        config.strategies = [s for s in config.strategies if s in wanted]
        if not config.strategies:
            raise RunnerError("strategy filter removed every strategy")
    if args.seed:
        config.seeds = [s for s in config.seeds if s in set(args.seed)]
        if not config.seeds:
            raise RunnerError("seed filter removed every seed")
    if args.dataset:
        wanted_tasks = set(args.dataset)
        config.datasets = [d for d in config.datasets if d.task_id in wanted_tasks]
        if not config.datasets:
            raise RunnerError("dataset filter removed every dataset")
    if args.exemplar_id:
        pinned = tuple(args.exemplar_id)
        config.datasets = [
            DatasetSpec(d.task_id, d.corpus_path, d.sample_count, pinned)
            for d in config.datasets
        ]
    report = run_experiment(config, base_dir)
    sys.stdout.write(emit_report(report, args.format))
    return 0


def _cmd_score(args) -> int:
    report = rescore_from_transcripts(args.transcripts)
    sys.stdout.write(emit_report(report, args.format))
    return 0


def _cmd_replay_verify(args) -> int:
    path = Path(args.cassette)
    if not path.exists():
        raise RunnerError(f"cassette {path} does not exist")
    cassette = Cassette(path)
    sys.stdout.write(
        f"cassette ok: {len(cassette)} entries"
        + (f", model {cassette.model_name}" if cassette.model_name else "")
        + "\n"
    )
    return 0


def _cmd_gen_fixtures(args) -> int:
    schema = get_task_schema(args.task)
    samples = gen_fixtures(schema, args.n, args.seed)
    lines = "".join(dumps_sample(s) + "\n" for s in samples)
    if args.out:
        Path(args.out).write_text(lines, encoding="utf-8")
        sys.stdout.write(f"wrote {len(samples)} samples to {args.out}\n")
    else:
        sys.stdout.write(lines)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "score": _cmd_score,
    "replay-verify": _cmd_replay_verify,
    "gen-fixtures": _cmd_gen_fixtures,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (RunnerError, BackendError, CorpusError, PromptError, PlanError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
