"""Per-instance task pipelines: vanilla and decomposed (extract + choose) flows.

Stage plans:

* MRE / MIED: one multi-choice call.
* MNER: one extraction call per entity category, then one choice call per
  deduplicated candidate span. Gold-span mode skips extraction.
* MTED: one sentence-level category choice, one trigger-extraction call
  conditioned on the predicted category, then one 9-option choice per
  candidate. Gold-span mode skips the first two.

Candidates classified as NOTA are filtered before a Prediction is emitted,
so predictions never carry the NOTA label (NOTA shows up as an empty
payload). Instances may be processed concurrently; stages within one
instance are strictly sequential.
"""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .backends import Backend, DecodingParams, GenerationRequest
from .errors import ConfigError, UnsupportedModalityError
from .model import LabelSchema, MieInstance, Span, TaskKind
from .parsing import ParseOutcome, parse_choice, parse_span_list, parse_vanilla_label
from .prompting import (
    OptionSet,
    RenderedPrompt,
    Stage,
    build_option_set,
    load_template,
    permute_option_set,
    render_choice_qa,
    render_span_extraction,
    render_vanilla,
)
from .evaluation import Prediction, PredictionItem


class Method(str, Enum):
    VANILLA = "vanilla"
    MQA = "mqa"
    MQA_GOLD_SPAN = "mqa_gold_span"


@dataclass(frozen=True)
class PipelineConfig:
    method: Method = Method.MQA
    variant: int = 1  # instruction variant of the varied stage (1..4)
    option_seed: int = 0  # 0 = published option order
    decoding: DecodingParams = field(default_factory=DecodingParams)
    span_case_sensitive: bool = True
    # "schema": typed options for every schema label; "appendix": reproduce
    # the published 4-option block exactly (drops labels the published block
    # omits, e.g. miscellaneous).
    template_fidelity: str = "schema"
    text_only: bool = False  # ChatGPT-style single-stage prompts, no images

    def validate(self, task: TaskKind) -> None:
        if not 1 <= self.variant <= 4:
            raise ConfigError(f"variant must be 1..4, got {self.variant}")
        if self.template_fidelity not in ("schema", "appendix"):
            raise ConfigError(f"bad template_fidelity {self.template_fidelity!r}")
        if self.method is Method.MQA_GOLD_SPAN and task not in (TaskKind.MNER, TaskKind.MTED):
            raise ConfigError(
                f"gold-span mode only applies to span tasks, not {task.value}"
            )
        if self.text_only:
            if self.method is not Method.VANILLA:
                raise ConfigError("text-only prompts only exist for the vanilla method")
            if task is TaskKind.MIED:
                raise UnsupportedModalityError(
                    "image-centric event detection cannot run on a text-only backend"
                )


@dataclass(frozen=True)
class TraceEntry:
    prompt_id: str
    template_id: str
    generation: str
    parse_method: str
    parsed: str


@dataclass(frozen=True)
class StageTrace:
    instance_id: str
    entries: tuple[TraceEntry, ...]

    @property
    def n_calls(self) -> int:
        return len(self.entries)


@dataclass
class RunDiagnostics:
    """Thread-safe counters surfaced in the run manifest."""

    dropped_spans: int = 0
    failed_parses: int = 0
    parse_methods: Counter = field(default_factory=Counter)
    errored_instances: list[str] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record_outcome(self, outcome: ParseOutcome) -> None:
        with self._lock:
            self.parse_methods[outcome.method.value] += 1
            if outcome.failed:
                self.failed_parses += 1

    def record_dropped(self, n: int) -> None:
        if n:
            with self._lock:
                self.dropped_spans += n

    def record_errored(self, instance_id: str) -> None:
        with self._lock:
            self.errored_instances.append(instance_id)

    def to_dict(self) -> dict:
        return {
            "dropped_spans": self.dropped_spans,
            "failed_parses": self.failed_parses,
            "parse_methods": dict(sorted(self.parse_methods.items())),
            "errored_instances": sorted(self.errored_instances),
        }


def filter_nota(candidates: list[tuple], nota_label: str) -> list[tuple]:
    """Drop (payload, label) pairs classified as NOTA; order preserved."""
    return [(payload, label) for payload, label in candidates if label != nota_label]


class _InstanceRun:
    """Shared plumbing for one instance's pipeline execution."""

    def __init__(
        self,
        instance: MieInstance,
        schema: LabelSchema,
        backend: Backend,
        config: PipelineConfig,
        diagnostics: RunDiagnostics,
    ):
        self.instance = instance
        self.schema = schema
        self.backend = backend
        self.config = config
        self.diag = diagnostics
        self.entries: list[TraceEntry] = []
        self.include_image = backend.supports_images and not config.text_only

    def generate(self, prompt: RenderedPrompt) -> str:
        request = GenerationRequest(
            prompt_text=prompt.text,
            image=prompt.image,
            decoding=self.config.decoding,
        )
        return self.backend.generate(request).text

    def record(self, prompt: RenderedPrompt, generation: str, method: str, parsed: str) -> None:
        self.entries.append(
            TraceEntry(
                prompt_id=prompt.prompt_id,
                template_id=prompt.template_id,
                generation=generation,
                parse_method=method,
                parsed=parsed,
            )
        )

    def trace(self) -> StageTrace:
        return StageTrace(instance_id=self.instance.id, entries=tuple(self.entries))

    def prediction(self, items: list[PredictionItem]) -> Prediction:
        return Prediction(
            instance_id=self.instance.id, task=self.instance.task, items=tuple(items)
        )

    # -- shared stage helpers --------------------------------------------

    def extract_spans(self, template, category: str) -> list[Span]:
        prompt = render_span_extraction(
            template, self.instance, self.schema, category, include_image=self.include_image
        )
        generation = self.generate(prompt)
        result = parse_span_list(
            generation,
            self.instance.sentence,
            case_sensitive=self.config.span_case_sensitive,
        )
        self.diag.record_dropped(result.dropped)
        self.record(
            prompt,
            generation,
            "span_list",
            ", ".join(s.surface for s in result.spans),
        )
        return sorted(result.spans, key=lambda s: (s.char_start, s.surface))

    def choose(self, template, options: OptionSet) -> ParseOutcome:
        options = permute_option_set(options, self.config.option_seed)
        prompt = render_choice_qa(
            template, self.instance, options, include_image=self.include_image
        )
        generation = self.generate(prompt)
        outcome = parse_choice(generation, options, self.schema.nota_label)
        self.diag.record_outcome(outcome)
        self.record(prompt, generation, outcome.method.value, outcome.value)
        return outcome

    def gold_span_candidates(self) -> list[Span]:
        seen: set[str] = set()
        out = []
        for item in sorted(self.instance.gold, key=lambda g: (g.char_start, g.surface)):
            if item.surface not in seen:
                seen.add(item.surface)
                out.append(Span(surface=item.surface, char_start=item.char_start))
        return out


def run_mner(run: _InstanceRun) -> Prediction:
    schema, config = run.schema, run.config
    if config.method is Method.MQA_GOLD_SPAN:
        candidates = run.gold_span_candidates()
    else:
        extraction = load_template(TaskKind.MNER, Stage.SPAN_EXTRACTION, 1)
        seen: set[str] = set()
        candidates = []
        for label in schema.label_ids:  # schema-category order, then position
            for span in run.extract_spans(extraction, label):
                if span.surface not in seen:
                    seen.add(span.surface)
                    candidates.append(span)
    choice_template = load_template(TaskKind.MNER, Stage.CHOICE_QA, config.variant)
    labeled: list[tuple[Span, str]] = []
    for span in candidates:
        options = build_option_set(
            schema,
            candidate=span.surface,
            appendix_fidelity=config.template_fidelity == "appendix",
        )
        outcome = run.choose(choice_template, options)
        labeled.append((span, outcome.value))
    items = [
        PredictionItem(
            label=label,
            surface=span.surface,
            char_start=span.char_start,
            provenance=choice_template.id,
        )
        for span, label in filter_nota(labeled, schema.nota_label)
    ]
    return run.prediction(items)


def run_mted(run: _InstanceRun) -> Prediction:
    schema, config = run.schema, run.config
    if config.method is Method.MQA_GOLD_SPAN:
        candidates = run.gold_span_candidates()
    else:
        pre_template = load_template(TaskKind.MTED, Stage.TED_PREPROCESS, 1)
        pre_options = build_option_set(schema, stage=Stage.TED_PREPROCESS)
        category = run.choose(pre_template, pre_options).value
        candidates = []
        if category != schema.nota_label:
            extraction = load_template(TaskKind.MTED, Stage.SPAN_EXTRACTION, 1)
            spans = run.extract_spans(extraction, category)
            candidates = list(spans[:1])  # the extraction prompt asks for one word
    choice_template = load_template(TaskKind.MTED, Stage.CHOICE_QA, config.variant)
    labeled: list[tuple[Span, str]] = []
    for span in candidates:
        options = build_option_set(schema, candidate=span.surface)
        outcome = run.choose(choice_template, options)
        labeled.append((span, outcome.value))
    items = [
        PredictionItem(
            label=label,
            surface=span.surface,
            char_start=span.char_start,
            provenance=choice_template.id,
        )
        for span, label in filter_nota(labeled, schema.nota_label)
    ]
    return run.prediction(items)


def run_mre(run: _InstanceRun) -> Prediction:
    schema, config = run.schema, run.config
    rel = run.instance.gold
    type_pair = (rel.head_type, rel.tail_type)
    options = build_option_set(
        schema, head=rel.head.surface, tail=rel.tail.surface, type_pair=type_pair
    )
    template = load_template(TaskKind.MRE, Stage.CHOICE_QA, config.variant)
    outcome = run.choose(template, options)
    items = []
    if outcome.value != schema.nota_label:
        items.append(PredictionItem(label=outcome.value, provenance=template.id))
    return run.prediction(items)


def run_mied(run: _InstanceRun) -> Prediction:
    schema, config = run.schema, run.config
    if not run.backend.supports_images or config.text_only:
        raise UnsupportedModalityError(
            "image-centric event detection needs a multimodal backend"
        )
    if run.instance.image is None:
        raise ConfigError(f"instance {run.instance.id!r} has no image")
    options = build_option_set(schema)
    template = load_template(TaskKind.MIED, Stage.CHOICE_QA, config.variant)
    outcome = run.choose(template, options)
    items = []
    if outcome.value != schema.nota_label:
        items.append(PredictionItem(label=outcome.value, provenance=template.id))
    return run.prediction(items)


def run_vanilla(run: _InstanceRun) -> Prediction:
    schema, config, instance = run.schema, run.config, run.instance
    task = instance.task
    stage = Stage.TEXT_VANILLA if config.text_only else Stage.VANILLA
    variant = 1 if config.text_only else config.variant
    template = load_template(task, stage, variant)

    if task in (TaskKind.MNER, TaskKind.MTED):
        items: list[PredictionItem] = []
        for label in schema.label_ids:
            prompt = render_vanilla(
                template, instance, schema, category=label, include_image=run.include_image
            )
            generation = run.generate(prompt)
            result = parse_span_list(
                generation, instance.sentence, case_sensitive=config.span_case_sensitive
            )
            run.diag.record_dropped(result.dropped)
            run.record(prompt, generation, "span_list", ", ".join(s.surface for s in result.spans))
            # a surface returned under several category prompts yields several
            # predictions - the failure mode the decomposed flow avoids
            items += [
                PredictionItem(
                    label=label,
                    surface=span.surface,
                    char_start=span.char_start,
                    provenance=template.id,
                )
                for span in result.spans
            ]
        return run.prediction(items)

    if task is TaskKind.MRE:
        rel = instance.gold
        candidates = list(schema.constrained_relations(rel.head_type, rel.tail_type))
        prompt = render_vanilla(
            template,
            instance,
            schema,
            relation_candidates=candidates,
            include_image=run.include_image,
        )
    else:  # MIED
        if not run.backend.supports_images or config.text_only:
            raise UnsupportedModalityError(
                "image-centric event detection needs a multimodal backend"
            )
        candidates = list(schema.label_ids)
        prompt = render_vanilla(template, instance, schema, include_image=run.include_image)

    generation = run.generate(prompt)
    outcome = parse_vanilla_label(generation, schema, candidates + [schema.nota_label])
    run.diag.record_outcome(outcome)
    run.record(prompt, generation, outcome.method.value, outcome.value)
    items = []
    if outcome.value != schema.nota_label:
        items.append(PredictionItem(label=outcome.value, provenance=template.id))
    return run.prediction(items)


_MQA_RUNNERS = {
    TaskKind.MNER: run_mner,
    TaskKind.MTED: run_mted,
    TaskKind.MRE: run_mre,
    TaskKind.MIED: run_mied,
}


def run_instance(
    instance: MieInstance,
    schema: LabelSchema,
    backend: Backend,
    config: PipelineConfig,
    diagnostics: Optional[RunDiagnostics] = None,
) -> tuple[Prediction, StageTrace]:
    """Execute the configured pipeline for one instance."""
    config.validate(instance.task)
    run = _InstanceRun(instance, schema, backend, config, diagnostics or RunDiagnostics())
    if config.method is Method.VANILLA:
        prediction = run_vanilla(run)
    else:
        prediction = _MQA_RUNNERS[instance.task](run)
    return prediction, run.trace()


def expected_stage_calls(
    instance: MieInstance,
    schema: LabelSchema,
    config: PipelineConfig,
    n_candidates: int,
) -> int:
    """The stage-plan call count an instance's trace must show."""
    task = instance.task
    if config.method is Method.VANILLA:
        return len(schema.label_ids) if task in (TaskKind.MNER, TaskKind.MTED) else 1
    if task in (TaskKind.MRE, TaskKind.MIED):
        return 1
    if config.method is Method.MQA_GOLD_SPAN:
        return n_candidates
    if task is TaskKind.MNER:
        return len(schema.label_ids) + n_candidates
    return 2 + n_candidates  # MTED: category step + extraction + choices
