"""Independent reference implementations used only to check the package.

These deliberately avoid the package's own shortcuts: pair matching is a
brute-force search over injective assignments instead of a Counter
intersection, and aggregation runs on exact rationals instead of floats.
Keep this module free of imports from tfweval internals beyond plain data.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence


def max_matching(parsed: Sequence[tuple[str, str]], gold: Sequence[tuple[str, str]]) -> int:
    """Largest number of gold pairs that can each be matched to a distinct,
    exactly equal parsed pair, found by exhaustive search."""

    def best_from(gold_idx: int, used: set[int]) -> int:
        if gold_idx == len(gold):
            return 0
        # Option 1: leave this gold pair unmatched.
        best = best_from(gold_idx + 1, used)
        # Option 2: match it against any unused, equal parsed pair.
        for parsed_idx, candidate in enumerate(parsed):
            if parsed_idx in used or candidate != gold[gold_idx]:
                continue
            used.add(parsed_idx)
            best = max(best, 1 + best_from(gold_idx + 1, used))
            used.remove(parsed_idx)
        return best

    return best_from(0, set())


def oracle_score(
    parsed_label: str | None,
    parsed_pairs: Sequence[tuple[str, str]],
    gold_label: str,
    gold_pairs: Sequence[tuple[str, str]],
    empty_gold_ls_one: bool = False,
) -> tuple[Fraction, Fraction, Fraction]:
    """Exact (tc, ls, total) for one sample."""
    tc = Fraction(1) if parsed_label is not None and parsed_label == gold_label else Fraction(0)
    if gold_pairs:
        ls = Fraction(max_matching(parsed_pairs, gold_pairs), len(gold_pairs))
    else:
        ls = Fraction(1) if empty_gold_ls_one else Fraction(0)
    total = Fraction(1) if tc == 1 and ls == 1 else Fraction(0)
    return tc, ls, total


def oracle_aggregate(
    scores_by_run: Sequence[Sequence[tuple[Fraction, Fraction, Fraction]]],
) -> tuple[Fraction, Fraction, Fraction]:
    """Exact per-sample-then-overall mean, as percentages."""
    n_runs = len(scores_by_run)
    n_samples = len(scores_by_run[0])
    means = []
    for metric in range(3):
        per_sample = [
            sum(run[i][metric] for run in scores_by_run) / n_runs
            for i in range(n_samples)
        ]
        means.append(sum(per_sample) / n_samples * 100)
    return tuple(means)
