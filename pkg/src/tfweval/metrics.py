"""Per-sample and aggregate accuracy.

Three per-sample accuracies: TC is 1 when the extracted text label equals
gold; LS is the fraction of gold pairs matched by the parsed pairs; Total is
1 only when both are 1. Pair matching is a multiset intersection on exact
(label, span) equality, so one gold pair is consumed by at most one parsed
pair and spurious parsed pairs never enter the denominator.

With no gold pairs the quotient is undefined; the default scores LS as 0,
matching the guarded quotient exactly. `empty_gold_ls_one` flips that case to
1 for callers who consider an empty extraction over empty gold correct.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import fsum
from typing import Sequence

from .corpus import MixedSample
from .parsing import ParsedAnswer


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class SampleScore:
    tc_acc: float
    ls_acc: float
    total_acc: float


@dataclass(frozen=True)
class AggregateScore:
    """Means over runs then samples, as percentages."""

    tc: float
    ls: float
    total: float
    n_samples: int
    n_runs: int


def matched_pair_count(
    parsed_pairs: Sequence, gold_pairs: Sequence
) -> int:
    """Size of the multiset intersection on exact (label, span) equality."""
    parsed_counts = Counter((p.label, p.span) for p in parsed_pairs)
    gold_counts = Counter((p.label, p.span) for p in gold_pairs)
    return sum((parsed_counts & gold_counts).values())


def score_sample(
    parsed: ParsedAnswer,
    gold: MixedSample,
    empty_gold_ls_one: bool = False,
) -> SampleScore:
    tc = 1.0 if parsed.text_label is not None and parsed.text_label == gold.text_label else 0.0
    if gold.gold_pairs:
        ls = matched_pair_count(parsed.pairs, gold.gold_pairs) / len(gold.gold_pairs)
    else:
        ls = 1.0 if empty_gold_ls_one else 0.0
    total = 1.0 if tc == 1.0 and ls == 1.0 else 0.0
    return SampleScore(tc_acc=tc, ls_acc=ls, total_acc=total)


def aggregate(scores_by_run: Sequence[Sequence[SampleScore]]) -> AggregateScore:
    """Mean per sample across runs, then mean across samples, times 100.

    Runs must be aligned: equal length, position i in every run scoring the
    same sample. Summation uses math.fsum, keeping aggregates within 1e-9 of
    exact rational arithmetic.
    """
    if not scores_by_run:
        raise MetricsError("no runs to aggregate")
    n_samples = len(scores_by_run[0])
    if n_samples == 0:
        raise MetricsError("runs contain no samples")
    for i, run in enumerate(scores_by_run):
        if len(run) != n_samples:
            raise MetricsError(
                f"run {i} has {len(run)} samples, expected {n_samples}"
            )
    n_runs = len(scores_by_run)

    def mean_percent(metric: str) -> float:
        per_sample = [
            fsum(getattr(run[i], metric) for run in scores_by_run) / n_runs
            for i in range(n_samples)
        ]
        return fsum(per_sample) / n_samples * 100.0

    return AggregateScore(
        tc=mean_percent("tc_acc"),
        ls=mean_percent("ls_acc"),
        total=mean_percent("total_acc"),
        n_samples=n_samples,
        n_runs=n_runs,
    )
