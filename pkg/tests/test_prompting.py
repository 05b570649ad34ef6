from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import golden_text
from mieqa.errors import ConfigError, TemplateError
from mieqa.model import TaskKind, load_schema
from mieqa.prompting import (
    Option,
    OptionSet,
    Stage,
    available_variants,
    build_option_set,
    load_template,
    permute_option_set,
    render_choice_qa,
    render_span_extraction,
    render_vanilla,
    template_checksums,
)

MNER = load_schema("twitter17")
MRE = load_schema("mnre_v2")
MIED = load_schema("m2e2_image")
MTED = load_schema("m2e2_text")


class TestBuildOptionSet:
    def test_mner_schema_mode_has_four_typed_plus_nota_last(self):
        opts = build_option_set(MNER, candidate="London")
        assert [o.letter for o in opts.options] == ["A", "B", "C", "D", "E"]
        assert opts.options[0].text == "London is a location entity"
        assert opts.options[-1].label == MNER.nota_label
        assert opts.options[-1].text.endswith(
            "is not a named entity or does not belong to type "
            "[location, person, organization, miscellaneous]"
        )

    def test_mner_appendix_mode_drops_miscellaneous(self):
        opts = build_option_set(MNER, candidate="London", appendix_fidelity=True)
        assert [o.label for o in opts.options] == [
            "location", "person", "organization", "none",
        ]

    def test_mied_has_nine_options_with_no_event_last(self):
        opts = build_option_set(MIED)
        assert len(opts.options) == 9
        assert opts.options[-1] == Option("I", "none", "The image describes no event")

    def test_mted_choice_puts_nota_first(self):
        opts = build_option_set(MTED, candidate="rally")
        assert opts.options[0].label == "none"
        assert opts.options[0].text.startswith("The word rally is a common word")
        assert len(opts.options) == 9

    def test_mted_preprocess_has_eight_options_and_no_nota(self):
        opts = build_option_set(MTED, stage=Stage.TED_PREPROCESS)
        assert len(opts.options) == 8
        assert all(o.label != MTED.nota_label for o in opts.options)
        assert opts.options[6].text == "The life of a person ends"

    def test_mre_two_relation_pair_gives_three_options(self):
        opts = build_option_set(
            MRE, head="Ana", tail="Lima", type_pair=("per", "loc")
        )
        assert len(opts.options) == 3
        assert opts.options[0].text == "Ana lives in Lima"
        assert opts.options[2].text == "Ana has no known relations to Lima"

    def test_mre_unknown_pair_is_a_config_error_naming_the_pair(self):
        with pytest.raises(ConfigError, match="'per', 'building'"):
            build_option_set(MRE, head="A", tail="B", type_pair=("per", "building"))


class TestPermutation:
    def test_seed_zero_is_identity(self):
        opts = build_option_set(MIED)
        assert permute_option_set(opts, 0) is opts

    def test_permuted_set_keeps_letters_and_label_multiset(self):
        opts = build_option_set(MNER, candidate="London")
        shuffled = permute_option_set(opts, 42)
        assert [o.letter for o in shuffled.options] == ["A", "B", "C", "D", "E"]
        assert sorted(o.label for o in shuffled.options) == sorted(
            o.label for o in opts.options
        )
        assert len(set(shuffled.decode_map.values())) == len(shuffled.options)

    def test_applying_recorded_inverse_restores_original_order(self):
        # derived check: reconstruct the permutation, invert it by hand, and
        # verify composition gives back the identity arrangement
        opts = build_option_set(MIED)
        shuffled = permute_option_set(opts, 99)
        labels = [o.label for o in opts.options]
        perm = [labels.index(o.label) for o in shuffled.options]
        inverse = [perm.index(i) for i in range(len(perm))]
        restored = [shuffled.options[inverse[i]].label for i in range(len(perm))]
        assert restored == labels

    @given(seed=st.integers(min_value=0, max_value=2**32))
    @settings(max_examples=60)
    def test_decode_map_bijectivity_under_any_seed(self, seed):
        opts = permute_option_set(build_option_set(MIED), seed)
        decode = opts.decode_map
        assert len(decode) == 9
        assert len(set(decode.values())) == 9
        for option in opts.options:
            assert decode[option.letter] == option.label

    def test_same_seed_same_order_across_calls(self):
        opts = build_option_set(MTED, candidate="rally")
        first = [o.label for o in permute_option_set(opts, 7).options]
        second = [o.label for o in permute_option_set(opts, 7).options]
        assert first == second


class TestRendering:
    def _mner_instance(self, fixture_datasets):
        return fixture_datasets[TaskKind.MNER].by_id["mner-0002"]

    def test_mner_choice_appendix_golden(self, fixture_datasets):
        inst = self._mner_instance(fixture_datasets)
        template = load_template(TaskKind.MNER, Stage.CHOICE_QA, 1)
        opts = build_option_set(MNER, candidate="Talwind", appendix_fidelity=True)
        rendered = render_choice_qa(template, inst, opts)
        assert rendered.text == golden_text("mner_choice_appendix.txt")
        assert rendered.option_set is opts
        assert rendered.image == inst.image

    def test_mner_choice_schema_golden(self, fixture_datasets):
        inst = self._mner_instance(fixture_datasets)
        template = load_template(TaskKind.MNER, Stage.CHOICE_QA, 1)
        opts = build_option_set(MNER, candidate="Talwind")
        assert render_choice_qa(template, inst, opts).text == golden_text(
            "mner_choice_schema.txt"
        )

    def test_mner_extraction_golden_and_category_slot(self, fixture_datasets):
        inst = self._mner_instance(fixture_datasets)
        template = load_template(TaskKind.MNER, Stage.SPAN_EXTRACTION, 1)
        rendered = render_span_extraction(template, inst, MNER, "organization")
        assert rendered.text == golden_text("mner_extraction.txt")
        texts = {
            c: render_span_extraction(template, inst, MNER, c).text
            for c in MNER.label_ids
        }
        assert len(set(texts.values())) == 4  # only the category slot differs

    def test_mre_choice_golden(self, fixture_datasets):
        inst = fixture_datasets[TaskKind.MRE].by_id["mre-0002"]
        template = load_template(TaskKind.MRE, Stage.CHOICE_QA, 1)
        rel = inst.gold
        opts = build_option_set(
            MRE,
            head=rel.head.surface,
            tail=rel.tail.surface,
            type_pair=(rel.head_type, rel.tail_type),
        )
        assert render_choice_qa(template, inst, opts).text == golden_text("mre_choice.txt")

    def test_mied_choice_golden(self, fixture_datasets):
        inst = fixture_datasets[TaskKind.MIED].instances[0]
        template = load_template(TaskKind.MIED, Stage.CHOICE_QA, 1)
        rendered = render_choice_qa(template, inst, build_option_set(MIED))
        assert rendered.text == golden_text("mied_choice.txt")
        assert rendered.image == inst.image

    def test_mted_three_stage_goldens(self, fixture_datasets):
        inst = fixture_datasets[TaskKind.MTED].by_id["mted-0000"]
        pre = render_choice_qa(
            load_template(TaskKind.MTED, Stage.TED_PREPROCESS, 1),
            inst,
            build_option_set(MTED, stage=Stage.TED_PREPROCESS),
        )
        assert pre.text == golden_text("mted_preprocess.txt")
        extraction = render_span_extraction(
            load_template(TaskKind.MTED, Stage.SPAN_EXTRACTION, 1), inst, MTED, "life_die"
        )
        assert extraction.text == golden_text("mted_extraction.txt")
        assert "most possible trigger word" in extraction.text
        choice = render_choice_qa(
            load_template(TaskKind.MTED, Stage.CHOICE_QA, 1),
            inst,
            build_option_set(MTED, candidate="overdose"),
        )
        assert choice.text == golden_text("mted_choice.txt")

    def test_vanilla_goldens(self, fixture_datasets):
        mner_inst = self._mner_instance(fixture_datasets)
        out = render_vanilla(
            load_template(TaskKind.MNER, Stage.VANILLA, 1), mner_inst, MNER, category="location"
        )
        assert out.text == golden_text("mner_vanilla.txt")
        assert out.text.endswith("Entities:")

        mre_inst = fixture_datasets[TaskKind.MRE].by_id["mre-0002"]
        rel = mre_inst.gold
        out = render_vanilla(
            load_template(TaskKind.MRE, Stage.VANILLA, 1),
            mre_inst,
            MRE,
            relation_candidates=MRE.constrained_relations(rel.head_type, rel.tail_type),
        )
        assert out.text == golden_text("mre_vanilla.txt")
        assert "-None" in out.text

        mied_inst = fixture_datasets[TaskKind.MIED].instances[0]
        out = render_vanilla(load_template(TaskKind.MIED, Stage.VANILLA, 1), mied_inst, MIED)
        assert out.text == golden_text("mied_vanilla.txt")
        assert "- Conflict:Attack" in out.text

        mted_inst = fixture_datasets[TaskKind.MTED].by_id["mted-0000"]
        out = render_vanilla(
            load_template(TaskKind.MTED, Stage.VANILLA, 1), mted_inst, MTED, category="life_die"
        )
        assert out.text == golden_text("mted_vanilla.txt")

    def test_text_only_goldens(self, fixture_datasets):
        mner_inst = self._mner_instance(fixture_datasets)
        out = render_vanilla(
            load_template(TaskKind.MNER, Stage.TEXT_VANILLA, 1),
            mner_inst,
            MNER,
            category="organization",
            include_image=False,
        )
        assert out.text == golden_text("mner_text_only.txt")
        assert out.image is None

        mre_inst = fixture_datasets[TaskKind.MRE].by_id["mre-0002"]
        rel = mre_inst.gold
        out = render_vanilla(
            load_template(TaskKind.MRE, Stage.TEXT_VANILLA, 1),
            mre_inst,
            MRE,
            relation_candidates=MRE.constrained_relations(rel.head_type, rel.tail_type),
            include_image=False,
        )
        assert out.text == golden_text("mre_text_only.txt")

        mted_inst = fixture_datasets[TaskKind.MTED].by_id["mted-0000"]
        out = render_vanilla(
            load_template(TaskKind.MTED, Stage.TEXT_VANILLA, 1),
            mted_inst,
            MTED,
            category="life_die",
            include_image=False,
        )
        assert out.text == golden_text("mted_text_only.txt")

    def test_rendering_is_deterministic(self, fixture_datasets):
        inst = self._mner_instance(fixture_datasets)
        template = load_template(TaskKind.MNER, Stage.CHOICE_QA, 2)
        opts = build_option_set(MNER, candidate="Cusco")
        assert (
            render_choice_qa(template, inst, opts).text
            == render_choice_qa(template, inst, opts).text
        )

    def test_no_unbound_placeholders_across_all_stages_and_variants(
        self, fixture_datasets, schemas
    ):
        from mieqa.prompting import PLACEHOLDERS

        rendered = 0
        for task in TaskKind:
            inst = fixture_datasets[task].instances[3]
            schema = schemas[task]
            category = schema.label_ids[0]
            for stage in Stage:
                for variant in available_variants(task, stage):
                    template = load_template(task, stage, variant)
                    if stage is Stage.CHOICE_QA:
                        if task is TaskKind.MRE:
                            rel = inst.gold
                            opts = build_option_set(
                                schema,
                                head=rel.head.surface,
                                tail=rel.tail.surface,
                                type_pair=(rel.head_type, rel.tail_type),
                            )
                        else:
                            opts = build_option_set(schema, candidate="thing")
                        text = render_choice_qa(template, inst, opts).text
                    elif stage is Stage.TED_PREPROCESS:
                        opts = build_option_set(schema, stage=stage)
                        text = render_choice_qa(template, inst, opts).text
                    elif stage is Stage.SPAN_EXTRACTION:
                        text = render_span_extraction(template, inst, schema, category).text
                    else:  # vanilla / text_vanilla
                        kwargs = {}
                        if task in (TaskKind.MNER, TaskKind.MTED):
                            kwargs["category"] = category
                        if task is TaskKind.MRE:
                            rel = inst.gold
                            kwargs["relation_candidates"] = schema.constrained_relations(
                                rel.head_type, rel.tail_type
                            )
                        text = render_vanilla(template, inst, schema, **kwargs).text
                    assert not any(p in text for p in PLACEHOLDERS), (task, stage, variant)
                    rendered += 1
        assert rendered == 38  # every shipped asset rendered once

    def test_missing_category_is_an_error(self, fixture_datasets):
        inst = self._mner_instance(fixture_datasets)
        with pytest.raises(ConfigError, match="category"):
            render_vanilla(load_template(TaskKind.MNER, Stage.VANILLA, 1), inst, MNER)

    def test_every_choice_prompt_contains_exactly_one_nota_option(self, fixture_datasets, schemas):
        for task in TaskKind:
            schema = schemas[task]
            inst = fixture_datasets[task].instances[5]
            if task is TaskKind.MRE:
                rel = inst.gold
                opts = build_option_set(
                    schema,
                    head=rel.head.surface,
                    tail=rel.tail.surface,
                    type_pair=(rel.head_type, rel.tail_type),
                )
            else:
                opts = build_option_set(schema, candidate="word")
            assert sum(o.label == schema.nota_label for o in opts.options) == 1


class TestTemplateAssets:
    def test_variant_coverage(self):
        assert available_variants(TaskKind.MNER, Stage.CHOICE_QA) == [1, 2, 3, 4]
        assert available_variants(TaskKind.MNER, Stage.VANILLA) == [1, 2, 3, 4]
        assert available_variants(TaskKind.MTED, Stage.TED_PREPROCESS) == [1]
        assert available_variants(TaskKind.MTED, Stage.SPAN_EXTRACTION) == [1]
        assert available_variants(TaskKind.MIED, Stage.CHOICE_QA) == [1, 2, 3, 4]

    def test_mied_has_no_text_only_template(self):
        with pytest.raises(TemplateError):
            load_template(TaskKind.MIED, Stage.TEXT_VANILLA, 1)

    def test_checksums_cover_every_asset(self):
        sums = template_checksums()
        assert len(sums) == 38
        assert all(len(v) == 64 for v in sums.values())

    def test_wrong_stage_template_rejected(self, fixture_datasets):
        inst = fixture_datasets[TaskKind.MNER].instances[0]
        opts = build_option_set(MNER, candidate="x")
        with pytest.raises(ConfigError):
            render_choice_qa(load_template(TaskKind.MNER, Stage.VANILLA, 1), inst, opts)


def test_option_set_rejects_letter_gaps():
    with pytest.raises(ConfigError):
        OptionSet((Option("A", "a", "t"), Option("C", "b", "t")))
