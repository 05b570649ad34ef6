"""Prompt rendering: templates, option-set construction, and permutation.

Templates are plain-text assets under ``templates/<task>/<stage>/v<n>.txt``
using ``[Name]`` placeholders, loaded at import-from-package time and verified
against shipped checksums. Variant 1 of each stage reproduces the published
prompt wording byte-exactly; variants 2-4 are the published instruction
rewrites used by the robustness sweep.

Everything here is pure: same inputs always render the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from string import ascii_uppercase
from typing import Optional, Sequence

from ._rng import permutation
from .errors import ConfigError, TemplateError
from .model import ImageRef, LabelSchema, MieInstance, TaskKind

try:
    from importlib.resources import files as _resource_files
except ImportError:  # pragma: no cover
    _resource_files = None


class Stage(str, Enum):
    VANILLA = "vanilla"
    SPAN_EXTRACTION = "span_extraction"
    TED_PREPROCESS = "ted_preprocess"
    CHOICE_QA = "choice_qa"
    # ChatGPT-style single-stage prompts for text-only backends.
    TEXT_VANILLA = "text_vanilla"


# Placeholders that may appear in template bodies and option wordings.
PLACEHOLDERS = (
    "[Sentence S]",
    "[Entity category E_c]",
    "[Event category E_c]",
    "[Predicted Event category E_pc]",
    "[Predicted Entity Span E_ps]",
    "[Predicted Trigger Word T_p]",
    "[Candidate]",
    "[Head]",
    "[Tail]",
    "[Options]",
    "[Relation List]",
    "[Type List]",
)


@dataclass(frozen=True)
class PromptTemplate:
    id: str  # "<task>/<stage>/v<n>"
    task: TaskKind
    stage: Stage
    variant: int
    body: str


@dataclass(frozen=True)
class Option:
    letter: str
    label: str
    text: str  # option body, without the "A. " letter prefix


@dataclass(frozen=True)
class OptionSet:
    options: tuple[Option, ...]

    def __post_init__(self):
        letters = [o.letter for o in self.options]
        expected = list(ascii_uppercase[: len(letters)])
        if letters != expected:
            raise ConfigError(f"option letters must run A.. without gaps, got {letters}")
        if len({o.label for o in self.options}) != len(self.options):
            raise ConfigError("option labels must be distinct")

    @property
    def decode_map(self) -> dict[str, str]:
        return {o.letter: o.label for o in self.options}

    def letter_for(self, label: str) -> str:
        for o in self.options:
            if o.label == label:
                return o.letter
        raise KeyError(label)

    def block(self) -> str:
        return "\n".join(f"{o.letter}. {o.text}" for o in self.options)


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    template_id: str
    image: Optional[ImageRef] = None
    option_set: Optional[OptionSet] = None

    @property
    def prompt_id(self) -> str:
        """Content digest over text + attached image path (stable run key)."""
        h = hashlib.sha256(self.text.encode("utf-8"))
        if self.image is not None:
            h.update(b"\x00" + self.image.path.encode("utf-8"))
        return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# template loading
# ---------------------------------------------------------------------------


def _templates_root():
    return _resource_files("mieqa") / "templates"


@lru_cache(maxsize=1)
def template_checksums() -> dict[str, str]:
    raw = (_templates_root() / "checksums.json").read_bytes()
    return json.loads(raw.decode("utf-8"))


@lru_cache(maxsize=None)
def load_template(task: TaskKind, stage: Stage, variant: int = 1) -> PromptTemplate:
    """Load and checksum-verify one template asset."""
    rel = f"{task.value}/{stage.value}/v{variant}.txt"
    resource = _templates_root() / rel
    try:
        data = resource.read_bytes()
    except (FileNotFoundError, OSError):
        raise TemplateError(
            f"no template asset {rel!r} (stage {stage.value} of {task.value} "
            f"may not have variant {variant})"
        ) from None
    digest = hashlib.sha256(data).hexdigest()
    expected = template_checksums().get(rel)
    if expected != digest:
        raise TemplateError(f"template {rel} checksum mismatch: asset was modified")
    body = data.decode("utf-8")
    if body.endswith("\n"):
        body = body[:-1]
    return PromptTemplate(
        id=f"{task.value}/{stage.value}/v{variant}",
        task=task,
        stage=stage,
        variant=variant,
        body=body,
    )


def available_variants(task: TaskKind, stage: Stage) -> list[int]:
    out = []
    for v in range(1, 5):
        rel = f"{task.value}/{stage.value}/v{v}.txt"
        if rel in template_checksums():
            out.append(v)
    return out


# ---------------------------------------------------------------------------
# option sets
# ---------------------------------------------------------------------------


def _fill(text: str, mapping: dict[str, str]) -> str:
    for key, value in mapping.items():
        text = text.replace(key, value)
    return text


def build_option_set(
    schema: LabelSchema,
    *,
    stage: Stage = Stage.CHOICE_QA,
    candidate: str | None = None,
    head: str | None = None,
    tail: str | None = None,
    type_pair: tuple[str, str] | None = None,
    appendix_fidelity: bool = False,
) -> OptionSet:
    """One option per applicable label, plus NOTA at the schema's position.

    ``candidate`` is the span/trigger under classification (MNER/MTED);
    ``head``/``tail``/``type_pair`` drive MRE template instantiation and
    label-space narrowing. The MTED sentence-level category stage
    (``Stage.TED_PREPROCESS``) has no NOTA option.
    """
    slot_values = {}
    if candidate is not None:
        slot_values["[Candidate]"] = candidate
    if head is not None:
        slot_values["[Head]"] = head
    if tail is not None:
        slot_values["[Tail]"] = tail

    if stage is Stage.TED_PREPROCESS:
        bodies = [(d.id, d.preprocess_text) for d in schema.labels]
    else:
        label_ids = list(schema.label_ids)
        if schema.task is TaskKind.MRE:
            if type_pair is None:
                raise ConfigError("MRE option sets need the (head type, tail type) pair")
            label_ids = list(schema.constrained_relations(*type_pair))
            if not label_ids:
                raise ConfigError(
                    f"schema {schema.schema_id}: empty relation constraints for {type_pair}"
                )
        elif appendix_fidelity and schema.appendix_option_labels:
            label_ids = [l for l in label_ids if l in schema.appendix_option_labels]
        bodies = [(lid, _fill(schema.by_id[lid].option_text, slot_values)) for lid in label_ids]
        nota_body = (schema.nota_label, _fill(schema.nota_option_text, slot_values))
        if schema.nota_position == "first":
            bodies.insert(0, nota_body)
        else:
            bodies.append(nota_body)

    options = tuple(
        Option(letter=ascii_uppercase[i], label=label, text=text)
        for i, (label, text) in enumerate(bodies)
    )
    return OptionSet(options)


def permute_option_set(options: OptionSet, seed: int) -> OptionSet:
    """Seeded pseudorandom reordering; letters are reassigned A.. in the new order.

    Seed 0 is the identity permutation (the published option order). Other
    seeds apply a Fisher-Yates shuffle driven by SplitMix64, so any seed's
    order is reproducible across processes and implementations.
    """
    if seed == 0:
        return options
    order = permutation(len(options.options), seed)
    reordered = [options.options[i] for i in order]
    return OptionSet(
        tuple(
            replace(opt, letter=ascii_uppercase[i])
            for i, opt in enumerate(reordered)
        )
    )


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _check_unbound(text: str, template_id: str) -> None:
    leftover = [p for p in PLACEHOLDERS if p in text]
    if leftover:
        raise TemplateError(f"template {template_id}: unbound placeholders {leftover}")


def _finish(
    template: PromptTemplate,
    text: str,
    image: ImageRef | None,
    option_set: OptionSet | None = None,
) -> RenderedPrompt:
    _check_unbound(text, template.id)
    return RenderedPrompt(
        text=text, template_id=template.id, image=image, option_set=option_set
    )


def render_span_extraction(
    template: PromptTemplate,
    instance: MieInstance,
    schema: LabelSchema,
    category: str,
    *,
    include_image: bool = True,
) -> RenderedPrompt:
    """Stage-1 extraction prompt: list mentions of one category / one trigger word."""
    if template.stage is not Stage.SPAN_EXTRACTION:
        raise ConfigError(f"template {template.id} is not a span-extraction template")
    display = schema.display(category)
    text = _fill(
        template.body,
        {
            "[Sentence S]": instance.sentence.text,
            "[Entity category E_c]": display,
            "[Predicted Event category E_pc]": display,
        },
    )
    image = instance.image if include_image else None
    return _finish(template, text, image)


def render_choice_qa(
    template: PromptTemplate,
    instance: MieInstance,
    options: OptionSet,
    *,
    include_image: bool = True,
) -> RenderedPrompt:
    """Multi-choice prompt with the option block inserted in `options` order."""
    if template.stage not in (Stage.CHOICE_QA, Stage.TED_PREPROCESS):
        raise ConfigError(f"template {template.id} is not a choice template")
    if "[Options]" not in template.body:
        raise TemplateError(f"template {template.id} has no [Options] slot")
    text = _fill(
        template.body,
        {
            "[Sentence S]": instance.sentence.text,
            "[Options]": options.block(),
        },
    )
    image = instance.image if include_image else None
    return _finish(template, text, image, option_set=options)


def render_vanilla(
    template: PromptTemplate,
    instance: MieInstance,
    schema: LabelSchema,
    *,
    category: str | None = None,
    relation_candidates: Sequence[str] | None = None,
    include_image: bool = True,
) -> RenderedPrompt:
    """Direct-generation prompt (per-category for MNER/MTED, label list for MRE/MIED)."""
    if template.stage not in (Stage.VANILLA, Stage.TEXT_VANILLA):
        raise ConfigError(f"template {template.id} is not a vanilla template")
    mapping = {"[Sentence S]": instance.sentence.text}
    if template.task in (TaskKind.MNER, TaskKind.MTED):
        if category is None:
            raise ConfigError(f"{template.task.value} vanilla prompts need a category")
        display = schema.display(category)
        mapping["[Entity category E_c]"] = display
        mapping["[Event category E_c]"] = display
    if "[Relation List]" in template.body:
        if relation_candidates is None:
            raise ConfigError("MRE vanilla prompts need the constrained relation candidates")
        lines = [f"-{schema.display(r)}" for r in relation_candidates]
        lines.append(f"-{schema.nota_display}")
        mapping["[Relation List]"] = "\n".join(lines)
    if "[Type List]" in template.body:
        lines = [f"- {d.display}" for d in schema.labels]
        lines.append(f"- {schema.nota_display}")
        mapping["[Type List]"] = "\n".join(lines)
    text = _fill(template.body, mapping)
    image = instance.image if include_image else None
    return _finish(template, text, image)
