#!/usr/bin/env python3
"""Walk through prompt rendering for every task and stage.

Shows the published variant-1 wording, the schema-driven option blocks with
the none-of-the-above entry, and what a seeded option permutation does to
the letters (but not the wording) of each option.
"""

from pathlib import Path

from mieqa.model import TaskKind, load_schema, read_dataset
from mieqa.prompting import (
    Stage,
    build_option_set,
    load_template,
    permute_option_set,
    render_choice_qa,
    render_span_extraction,
    render_vanilla,
)

FIXTURES = Path(__file__).resolve().parent.parent / "datasets" / "fixtures"


def banner(title: str) -> None:
    print(f"\n{'=' * 72}\n{title}\n{'=' * 72}")


def main() -> None:
    mner = read_dataset(FIXTURES / "mner.jsonl").by_id["mner-0002"]
    mner_schema = load_schema("twitter17")

    banner("MNER stage 1: span extraction (one prompt per entity category)")
    template = load_template(TaskKind.MNER, Stage.SPAN_EXTRACTION, 1)
    print(render_span_extraction(template, mner, mner_schema, "organization").text)

    banner("MNER stage 2: multi-choice classification of one candidate span")
    options = build_option_set(mner_schema, candidate="Talwind")
    choice = load_template(TaskKind.MNER, Stage.CHOICE_QA, 1)
    print(render_choice_qa(choice, mner, options).text)

    banner("Same prompt, option order shuffled with seed 7 (letters reassigned)")
    print(render_choice_qa(choice, mner, permute_option_set(options, 7)).text)

    banner("MRE: one constrained multi-choice prompt (relation templates + NOTA)")
    mre = read_dataset(FIXTURES / "mre.jsonl").by_id["mre-0002"]
    mre_schema = load_schema("mnre_v2")
    rel = mre.gold
    mre_options = build_option_set(
        mre_schema,
        head=rel.head.surface,
        tail=rel.tail.surface,
        type_pair=(rel.head_type, rel.tail_type),
    )
    print(render_choice_qa(load_template(TaskKind.MRE, Stage.CHOICE_QA, 1), mre, mre_options).text)

    banner("MTED: the three-prompt chain")
    mted = read_dataset(FIXTURES / "mted.jsonl").by_id["mted-0000"]
    mted_schema = load_schema("m2e2_text")
    print(
        render_choice_qa(
            load_template(TaskKind.MTED, Stage.TED_PREPROCESS, 1),
            mted,
            build_option_set(mted_schema, stage=Stage.TED_PREPROCESS),
        ).text
    )
    print("\n--- then, conditioned on the predicted category ---\n")
    print(
        render_span_extraction(
            load_template(TaskKind.MTED, Stage.SPAN_EXTRACTION, 1), mted, mted_schema, "life_die"
        ).text
    )
    print("\n--- then, classify the extracted trigger (NOTA is option A) ---\n")
    print(
        render_choice_qa(
            load_template(TaskKind.MTED, Stage.CHOICE_QA, 1),
            mted,
            build_option_set(mted_schema, candidate="overdose"),
        ).text
    )

    banner("Vanilla baseline prompt for the same MRE instance")
    print(
        render_vanilla(
            load_template(TaskKind.MRE, Stage.VANILLA, 1),
            mre,
            mre_schema,
            relation_candidates=mre_schema.constrained_relations(rel.head_type, rel.tail_type),
        ).text
    )


if __name__ == "__main__":
    main()
