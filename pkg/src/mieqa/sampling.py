"""Distribution-preserving few-shot sampling and the event-detection split.

Per-category quotas use largest-remainder apportionment with a floor of one
sample per observed category. Categories are then filled in ascending quota
order by seeded uniform sampling without replacement; an instance that
exhibits several categories is eligible under each but consumes quota only
under the category it was drawn for.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from ._rng import SplitMix64, derive_seed
from .errors import DataError
from .model import Dataset, LabelSchema, MieInstance, instance_categories, iter_category_mentions


@dataclass(frozen=True)
class SamplePlan:
    k: int
    per_category: Mapping[str, int]
    seed: int

    def __post_init__(self):
        total = sum(self.per_category.values())
        if total != self.k:
            raise DataError(f"sample plan counts sum to {total}, expected k={self.k}")
        if any(v < 1 for v in self.per_category.values()):
            raise DataError("every category must get at least one sample")


def proportional_counts(category_freqs: Mapping[str, int], k: int) -> dict[str, int]:
    """Largest-remainder apportionment of k samples, at least 1 per category.

    Ideal shares are k*freq/total (exact rationals). Each category starts at
    max(1, floor(share)); a positive remainder goes +1 at a time to the
    largest fractional parts (ties: larger raw frequency, then label id
    ascending). When the floor-at-1 rule overshoots k, counts above 1 are
    decremented starting from the smallest fractional parts (ties: smaller
    raw frequency, then label id descending).
    """
    freqs = {c: f for c, f in category_freqs.items() if f > 0}
    if not freqs:
        raise DataError("no categories with positive frequency")
    if k < len(freqs):
        raise DataError(f"k={k} is smaller than the number of categories ({len(freqs)})")
    total = sum(freqs.values())

    shares = {c: Fraction(k * f, total) for c, f in freqs.items()}
    base = {c: max(1, int(shares[c])) for c in freqs}
    frac = {c: shares[c] - int(shares[c]) for c in freqs}
    remainder = k - sum(base.values())

    if remainder > 0:
        order = sorted(freqs, key=lambda c: (-frac[c], -freqs[c], c))
        for c in order[:remainder]:
            base[c] += 1
    elif remainder < 0:
        # ties on (frac, freq) broken by label id descending
        order = sorted(freqs, key=lambda c: (frac[c], freqs[c], _desc_key(c)))
        i = 0
        while remainder < 0:
            c = order[i % len(order)]
            if base[c] > 1:
                base[c] -= 1
                remainder += 1
            i += 1
    return base


class _desc_key(str):
    """Sort key wrapper giving descending lexicographic order."""

    def __lt__(self, other):  # type: ignore[override]
        return str.__gt__(self, other)


def category_frequencies(instances: Sequence[MieInstance], schema: LabelSchema) -> Counter:
    """Mention-level category counts (one count per gold mention)."""
    freqs: Counter = Counter()
    for inst in instances:
        freqs.update(iter_category_mentions(inst, schema))
    return freqs


def make_plan(instances: Sequence[MieInstance], schema: LabelSchema, k: int, seed: int) -> SamplePlan:
    freqs = category_frequencies(instances, schema)
    return SamplePlan(k=k, per_category=proportional_counts(freqs, k), seed=seed)


def fewshot_sample(
    instances: Sequence[MieInstance], schema: LabelSchema, plan: SamplePlan
) -> list[str]:
    """Ids of the selected instances, deterministic for a fixed plan seed.

    Categories are processed in ascending quota order (ties: label id), so
    rare categories pick first while their instances are still unclaimed.
    """
    rng = SplitMix64(derive_seed(plan.seed, 0))
    eligible: dict[str, list[MieInstance]] = {c: [] for c in plan.per_category}
    for inst in instances:
        for cat in instance_categories(inst, schema):
            if cat in eligible:
                eligible[cat].append(inst)

    selected: list[str] = []
    taken: set[str] = set()
    for cat in sorted(plan.per_category, key=lambda c: (plan.per_category[c], c)):
        want = plan.per_category[cat]
        pool = sorted(
            (inst.id for inst in eligible[cat] if inst.id not in taken)
        )
        if len(pool) < want:
            raise DataError(
                f"category {cat!r} has only {len(pool)} unclaimed instances, "
                f"but the plan asks for {want}"
            )
        picked = rng.sample(pool, want)
        taken.update(picked)
        selected.extend(picked)
    return sorted(selected)


@dataclass(frozen=True)
class MedSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    k_train: int
    n_val: int


def med_split(
    dataset: Dataset,
    schema: LabelSchema,
    *,
    k_train: int = 50,
    n_val: int = 200,
    seed: int = 0,
) -> MedSplit:
    """Partition an event-detection dataset into train/val/test.

    Train is a distribution-preserving k_train-shot sample of the full set;
    validation applies the same proportional procedure at size n_val over the
    remainder; everything else is test.
    """
    if len(dataset) <= k_train + n_val:
        raise DataError(
            f"dataset has {len(dataset)} instances; needs more than {k_train + n_val}"
        )
    instances = dataset.instances
    train_plan = SamplePlan(
        k=k_train,
        per_category=proportional_counts(category_frequencies(instances, schema), k_train),
        seed=derive_seed(seed, 1),
    )
    train_ids = fewshot_sample(instances, schema, train_plan)
    train_set = set(train_ids)

    remainder = [inst for inst in instances if inst.id not in train_set]
    val_plan = SamplePlan(
        k=n_val,
        per_category=proportional_counts(category_frequencies(remainder, schema), n_val),
        seed=derive_seed(seed, 2),
    )
    val_ids = fewshot_sample(remainder, schema, val_plan)
    val_set = set(val_ids)

    test_ids = sorted(
        inst.id for inst in instances if inst.id not in train_set and inst.id not in val_set
    )
    return MedSplit(
        train=tuple(train_ids),
        val=tuple(val_ids),
        test=tuple(test_ids),
        seed=seed,
        k_train=k_train,
        n_val=n_val,
    )
