"""Deterministic drawing of exemplar and test samples.

Plans must reproduce bit-for-bit across interpreter versions and across
reimplementations, so both the generator and the shuffle are pinned here
instead of delegated to random.Random (whose shuffle/sample algorithms are
not guaranteed stable between Python releases).

Generator: SplitMix64. The 64-bit state advances by the constant
0x9E3779B97F4A7C15 per step and each output is the mixed state
(xor-shift/multiply finalizer with constants 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB). Bounded draws reject outputs at or above the largest
multiple of the bound, then reduce modulo the bound, so they are unbiased.

Shuffle: partial Fisher-Yates over the corpus ids in file order. Position i
swaps with i + bounded(n - i). The first `icl_shots` shuffled slots become
the exemplars and the following `count` slots the test draw, so exemplars
and test samples are disjoint by construction.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

from .corpus import MixedSample, TaskSchema

_MASK64 = (1 << 64) - 1


class PlanError(ValueError):
    """The corpus cannot support the requested plan."""


class SplitMix64:
    """Seedable 64-bit generator with a fixed, documented output sequence."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def bounded(self, n: int) -> int:
        """Unbiased draw from [0, n)."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n


@dataclass(frozen=True)
class SamplePlan:
    """A seeded draw: exemplar ids for the prompt plus the test ids."""

    seed: int
    sample_count: int
    drawn_ids: tuple[str, ...]
    exemplar_ids: tuple[str, ...]

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "seed": self.seed,
                "exemplar_ids": list(self.exemplar_ids),
                "drawn_ids": list(self.drawn_ids),
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _partial_shuffle(ids: list[str], k: int, rng: SplitMix64) -> list[str]:
    n = len(ids)
    for i in range(min(k, n)):
        j = i + rng.bounded(n - i)
        ids[i], ids[j] = ids[j], ids[i]
    return ids


def draw_plan(
    corpus: Sequence[MixedSample],
    schema: TaskSchema,
    seed: int,
    count: int,
    exemplar_ids: Sequence[str] | None = None,
) -> SamplePlan:
    """Draw exemplars then `count` test samples, without replacement.

    Pure in (corpus order, seed, count, exemplar_ids). When `count` reaches or
    exceeds the remaining corpus, every non-exemplar sample is drawn. Passing
    `exemplar_ids` pins the exemplars instead of drawing them; the test draw
    then shuffles the remaining ids with the same generator.
    """
    if count <= 0:
        raise PlanError("count must be positive")
    ids = [s.sample_id for s in corpus]
    rng = SplitMix64(seed)

    if exemplar_ids is not None:
        exemplars = tuple(exemplar_ids)
        if len(exemplars) != schema.icl_shots:
            raise PlanError(
                f"{schema.task_id} needs {schema.icl_shots} exemplar(s), "
                f"got {len(exemplars)}"
            )
        if len(set(exemplars)) != len(exemplars):
            raise PlanError("exemplar ids must be distinct")
        id_set = set(ids)
        for ex in exemplars:
            if ex not in id_set:
                raise PlanError(f"exemplar id {ex!r} not in corpus")
        pool = [i for i in ids if i not in set(exemplars)]
        if not pool:
            raise PlanError("corpus has no samples left after exemplars")
        take = min(count, len(pool))
        drawn = tuple(_partial_shuffle(pool, take, rng)[:take])
        return SamplePlan(seed, count, drawn, exemplars)

    if len(ids) <= schema.icl_shots:
        raise PlanError(
            f"corpus of {len(ids)} cannot supply {schema.icl_shots} exemplar(s) "
            "plus at least one test sample"
        )
    take = schema.icl_shots + min(count, len(ids) - schema.icl_shots)
    shuffled = _partial_shuffle(ids, take, rng)
    exemplars = tuple(shuffled[: schema.icl_shots])
    drawn = tuple(shuffled[schema.icl_shots:take])
    return SamplePlan(seed, count, drawn, exemplars)
