#!/usr/bin/env python3
"""Distribution-preserving few-shot selection and the event-detection split.

Builds a 1000-instance synthetic text-event dataset, shows the per-category
quota plan (largest remainder, at least one per category), draws the sample,
and partitions into 50 train / 200 validation / rest test.
"""

from collections import Counter

from mieqa.fixtures import build_fixture_dataset
from mieqa.model import TaskKind, instance_categories, load_schema
from mieqa.sampling import category_frequencies, fewshot_sample, make_plan, med_split


def main() -> None:
    schema = load_schema("m2e2_text")
    dataset = build_fixture_dataset(TaskKind.MTED, size=1000)

    freqs = category_frequencies(dataset.instances, schema)
    print("mention-level category frequencies:")
    for cat, n in freqs.most_common():
        print(f"  {schema.display(cat) if cat != schema.nota_label else 'None':28s} {n}")

    plan = make_plan(dataset.instances, schema, k=50, seed=7)
    print("\n50-shot quota plan (floor 1 per category, largest remainder):")
    for cat, n in sorted(plan.per_category.items(), key=lambda kv: (-kv[1], kv[0])):
        print(f"  {cat:28s} {n}")

    ids = fewshot_sample(dataset.instances, schema, plan)
    drawn = Counter()
    for inst_id in ids:
        inst = dataset.by_id[inst_id]
        for cat in instance_categories(inst, schema):
            drawn[cat] += 1
    print(f"\ndrew {len(ids)} instances; per-category coverage of the draw:")
    for cat, n in drawn.most_common():
        print(f"  {cat:28s} {n}")

    split = med_split(dataset, schema, seed=7)
    print(
        f"\nmed split: {len(split.train)} train / {len(split.val)} val / "
        f"{len(split.test)} test (seed {split.seed})"
    )
    again = med_split(dataset, schema, seed=7)
    print(f"same seed reproduces the split: {split == again}")


if __name__ == "__main__":
    main()
