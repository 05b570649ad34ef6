"""Core domain types and the canonical JSONL dataset interchange.

Every downstream module (prompt rendering, pipelines, evaluation, sampling)
works exclusively on these types. All of them are immutable after
construction and safe to share across worker threads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .errors import ConfigError, DataError

try:  # Python 3.9+ importlib.resources.files
    from importlib.resources import files as _resource_files
except ImportError:  # pragma: no cover
    _resource_files = None


class TaskKind(str, Enum):
    MNER = "mner"
    MRE = "mre"
    MIED = "mied"
    MTED = "mted"


# Tasks whose gold annotation is a list of labeled spans.
SPAN_TASKS = (TaskKind.MNER, TaskKind.MTED)


@dataclass(frozen=True)
class Sentence:
    """Sentence text plus its token sequence (whitespace-derived by default)."""

    text: str
    tokens: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.tokens:
            object.__setattr__(self, "tokens", tuple(self.text.split()))


@dataclass(frozen=True)
class ImageRef:
    """Reference to an image file; the byte hash is computed lazily and cached."""

    path: str

    @cached_property
    def content_hash(self) -> str:
        try:
            data = Path(self.path).read_bytes()
        except OSError as exc:
            raise DataError(f"cannot read image {self.path!r}: {exc}") from exc
        return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class Span:
    """A surface string with an optional character offset (-1 when unknown)."""

    surface: str
    char_start: int = -1


@dataclass(frozen=True)
class LabeledSpan:
    """Gold or predicted mention: a span plus its entity/event label."""

    surface: str
    label: str
    char_start: int = -1


@dataclass(frozen=True)
class RelationGold:
    """MRE annotation: typed head/tail entities and a relation (possibly NOTA)."""

    head: Span
    head_type: str
    tail: Span
    tail_type: str
    relation: str


# Per-task gold payload: labeled spans (mner/mted), a relation (mre),
# or an event label id (mied).
GoldAnnotation = Union[tuple[LabeledSpan, ...], RelationGold, str]


@dataclass(frozen=True)
class MieInstance:
    id: str
    task: TaskKind
    sentence: Sentence
    gold: GoldAnnotation
    image: Optional[ImageRef] = None


@dataclass(frozen=True)
class LabelDef:
    """One label of a schema: internal id, display name, and option wordings.

    ``option_text`` may contain the [Candidate] / [Head] / [Tail] slots that
    are filled when an option set is built. ``preprocess_text`` is only used
    by the MTED sentence-level category prompt. For MRE, ``option_text`` is
    the relation template.
    """

    id: str
    display: str
    option_text: str = ""
    preprocess_text: str = ""


@dataclass(frozen=True)
class LabelSchema:
    """The label universe of one dataset, loaded from versioned JSON config."""

    schema_id: str
    task: TaskKind
    labels: tuple[LabelDef, ...]
    nota_label: str
    nota_display: str
    nota_option_text: str
    nota_position: str = "last"  # "last" or "first" in un-permuted option order
    type_constraints: Mapping[tuple[str, str], tuple[str, ...]] = field(default_factory=dict)
    # Labels shown as typed options when reproducing the published option
    # block exactly (template_fidelity="appendix"); empty = schema-driven.
    appendix_option_labels: tuple[str, ...] = ()
    checksum: str = ""

    def __post_init__(self):
        if self.nota_label in self.label_ids:
            raise ConfigError(
                f"schema {self.schema_id}: NOTA label {self.nota_label!r} must not appear in labels"
            )
        if self.nota_position not in ("first", "last"):
            raise ConfigError(f"schema {self.schema_id}: bad nota_position {self.nota_position!r}")

    @cached_property
    def label_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.labels)

    @cached_property
    def by_id(self) -> Mapping[str, LabelDef]:
        return {d.id: d for d in self.labels}

    def display(self, label_id: str) -> str:
        if label_id == self.nota_label:
            return self.nota_display
        return self.by_id[label_id].display

    def constrained_relations(self, head_type: str, tail_type: str) -> tuple[str, ...]:
        """Candidate relations for an MRE (head type, tail type) pair."""
        try:
            return self.type_constraints[(head_type, tail_type)]
        except KeyError:
            raise ConfigError(
                f"schema {self.schema_id}: no relation constraints for type pair "
                f"({head_type!r}, {tail_type!r})"
            ) from None


BUILTIN_SCHEMAS = (
    "twitter15",
    "twitter17",
    "mnre_v1",
    "mnre_v2",
    "m2e2_image",
    "m2e2_text",
)


def schema_from_dict(raw: dict, checksum: str = "") -> LabelSchema:
    try:
        nota = raw["nota"]
        labels = tuple(
            LabelDef(
                id=entry["id"],
                display=entry["display"],
                option_text=entry.get("option_text", ""),
                preprocess_text=entry.get("preprocess_text", ""),
            )
            for entry in raw["labels"]
        )
        constraints = {
            tuple(key.split(",")): tuple(value)
            for key, value in raw.get("type_constraints", {}).items()
        }
        return LabelSchema(
            schema_id=raw["schema_id"],
            task=TaskKind(raw["task"]),
            labels=labels,
            nota_label=nota["id"],
            nota_display=nota["display"],
            nota_option_text=nota["option_text"],
            nota_position=nota.get("position", "last"),
            type_constraints=constraints,
            appendix_option_labels=tuple(raw.get("appendix_option_labels", ())),
            checksum=checksum,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"malformed schema config: {exc}") from exc


def load_schema(name_or_path: str) -> LabelSchema:
    """Load a schema by built-in name (see BUILTIN_SCHEMAS) or file path."""
    if name_or_path in BUILTIN_SCHEMAS:
        resource = _resource_files("mieqa") / "schemas" / f"{name_or_path}.json"
        data = resource.read_bytes()
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise ConfigError(
                f"unknown schema {name_or_path!r}: not a built-in "
                f"({', '.join(BUILTIN_SCHEMAS)}) and no such file"
            )
        data = path.read_bytes()
    checksum = hashlib.sha256(data).hexdigest()
    return schema_from_dict(json.loads(data.decode("utf-8")), checksum=checksum)


# ---------------------------------------------------------------------------
# canonical JSONL interchange
# ---------------------------------------------------------------------------

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    schema_id: str
    task: TaskKind
    instances: tuple[MieInstance, ...]

    @cached_property
    def by_id(self) -> Mapping[str, MieInstance]:
        return {inst.id: inst for inst in self.instances}

    def __len__(self) -> int:
        return len(self.instances)


def _span_to_dict(span: Span) -> dict:
    return {"surface": span.surface, "char_start": span.char_start}


def _labeled_span_to_dict(item: LabeledSpan) -> dict:
    return {"surface": item.surface, "label": item.label, "char_start": item.char_start}


def instance_to_dict(inst: MieInstance) -> dict:
    if inst.task in SPAN_TASKS:
        gold: object = [_labeled_span_to_dict(s) for s in inst.gold]
    elif inst.task is TaskKind.MRE:
        rel = inst.gold
        gold = {
            "head": _span_to_dict(rel.head),
            "head_type": rel.head_type,
            "tail": _span_to_dict(rel.tail),
            "tail_type": rel.tail_type,
            "relation": rel.relation,
        }
    else:  # MIED
        gold = {"event": inst.gold}
    out = {
        "id": inst.id,
        "task": inst.task.value,
        "sentence": {"text": inst.sentence.text, "tokens": list(inst.sentence.tokens)},
        "gold": gold,
    }
    out["image"] = {"path": inst.image.path} if inst.image else None
    return out


def instance_from_dict(raw: dict) -> MieInstance:
    try:
        task = TaskKind(raw["task"])
        sent = raw["sentence"]
        sentence = Sentence(text=sent["text"], tokens=tuple(sent.get("tokens") or ()))
        image = ImageRef(path=raw["image"]["path"]) if raw.get("image") else None
        gold_raw = raw["gold"]
        gold: GoldAnnotation
        if task in SPAN_TASKS:
            gold = tuple(
                LabeledSpan(
                    surface=g["surface"],
                    label=g["label"],
                    char_start=g.get("char_start", -1),
                )
                for g in gold_raw
            )
        elif task is TaskKind.MRE:
            gold = RelationGold(
                head=Span(gold_raw["head"]["surface"], gold_raw["head"].get("char_start", -1)),
                head_type=gold_raw["head_type"],
                tail=Span(gold_raw["tail"]["surface"], gold_raw["tail"].get("char_start", -1)),
                tail_type=gold_raw["tail_type"],
                relation=gold_raw["relation"],
            )
        else:
            gold = gold_raw["event"]
        return MieInstance(id=raw["id"], task=task, sentence=sentence, gold=gold, image=image)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed instance record: {exc}") from exc


def write_dataset(path: str | Path, dataset: Dataset) -> None:
    header = {
        "record": "dataset",
        "version": DATASET_FORMAT_VERSION,
        "schema_id": dataset.schema_id,
        "task": dataset.task.value,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
        for inst in dataset.instances:
            fh.write(json.dumps(instance_to_dict(inst), ensure_ascii=False, sort_keys=True) + "\n")


def read_dataset(path: str | Path) -> Dataset:
    """Parse a canonical JSONL dataset.

    Relative image paths are resolved against the dataset file's directory,
    so committed fixture trees stay relocatable; absolute paths round-trip
    unchanged.
    """
    path = Path(path)
    try:
        # split on \n only: JSON strings may legally contain unescaped
        # unicode line separators (NEL etc.) that splitlines() would cut
        lines = path.read_text(encoding="utf-8").split("\n")
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise DataError(f"dataset {path} is empty (missing header record)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"dataset {path}: bad header line: {exc}") from exc
    if header.get("record") != "dataset":
        raise DataError(f"dataset {path}: first line is not a dataset header record")
    task = TaskKind(header["task"])
    instances = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            inst = instance_from_dict(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"dataset {path}:{lineno}: bad JSON: {exc}") from exc
        if inst.task is not task:
            raise DataError(
                f"dataset {path}:{lineno}: instance task {inst.task.value!r} "
                f"does not match header task {task.value!r}"
            )
        if inst.id in seen:
            raise DataError(f"dataset {path}:{lineno}: duplicate instance id {inst.id!r}")
        seen.add(inst.id)
        if inst.image is not None and not Path(inst.image.path).is_absolute():
            resolved = (path.parent / inst.image.path).as_posix()
            inst = MieInstance(
                id=inst.id,
                task=inst.task,
                sentence=inst.sentence,
                gold=inst.gold,
                image=ImageRef(path=resolved),
            )
        instances.append(inst)
    return Dataset(schema_id=header["schema_id"], task=task, instances=tuple(instances))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _check_span(surface: str, char_start: int, text: str, what: str) -> list[str]:
    issues = []
    if not surface:
        issues.append(f"{what}: empty surface string")
        return issues
    if surface not in text:
        issues.append(f"{what}: surface {surface!r} is not a substring of the sentence")
    elif char_start >= 0 and text[char_start : char_start + len(surface)] != surface:
        issues.append(f"{what}: char_start {char_start} does not point at {surface!r}")
    return issues


def validate_instance(inst: MieInstance, schema: LabelSchema) -> list[str]:
    """All per-instance invariant violations, as human-readable strings.

    An empty list means the instance is well-formed. Violations are data,
    not failures; only a task/schema mismatch raises.
    """
    if schema.task is not inst.task:
        raise ConfigError(
            f"schema task {schema.task.value!r} does not match instance task {inst.task.value!r}"
        )
    issues: list[str] = []
    text = inst.sentence.text
    known = set(schema.label_ids) | {schema.nota_label}

    if inst.task is not TaskKind.MIED and not text:
        issues.append("sentence.text: must be non-empty")

    if inst.task in SPAN_TASKS:
        for i, item in enumerate(inst.gold):
            issues += _check_span(item.surface, item.char_start, text, f"gold[{i}]")
            if item.label not in schema.label_ids:
                issues.append(f"gold[{i}].label: {item.label!r} is not in the schema labels")
    elif inst.task is TaskKind.MRE:
        rel = inst.gold
        issues += _check_span(rel.head.surface, rel.head.char_start, text, "gold.head")
        issues += _check_span(rel.tail.surface, rel.tail.char_start, text, "gold.tail")
        if rel.relation not in known:
            issues.append(f"gold.relation: {rel.relation!r} is not in labels or NOTA")
        if (rel.head_type, rel.tail_type) not in schema.type_constraints:
            issues.append(
                "gold: type pair "
                f"({rel.head_type!r}, {rel.tail_type!r}) has no type_constraints entry"
            )
        elif not schema.type_constraints[(rel.head_type, rel.tail_type)]:
            issues.append(
                "gold: type pair "
                f"({rel.head_type!r}, {rel.tail_type!r}) has an empty constraint entry"
            )
    else:  # MIED
        if inst.gold not in known:
            issues.append(f"gold.event: {inst.gold!r} is not in labels or NOTA")
        if inst.image is None:
            issues.append("image: required for image-centric event instances")

    return issues


def validate_dataset(dataset: Dataset, schema: LabelSchema) -> dict[str, list[str]]:
    """Map of instance id -> violations, for ids with at least one violation."""
    if dataset.task is not schema.task:
        raise ConfigError(
            f"dataset task {dataset.task.value!r} does not match schema task {schema.task.value!r}"
        )
    out = {}
    for inst in dataset.instances:
        issues = validate_instance(inst, schema)
        if issues:
            out[inst.id] = issues
    return out


def instance_categories(inst: MieInstance, schema: LabelSchema) -> tuple[str, ...]:
    """Category labels an instance exhibits; NOTA-only instances map to the NOTA id."""
    if inst.task in SPAN_TASKS:
        cats = sorted({item.label for item in inst.gold})
        return tuple(cats) if cats else (schema.nota_label,)
    if inst.task is TaskKind.MRE:
        return (inst.gold.relation,)
    return (inst.gold,)


def iter_category_mentions(inst: MieInstance, schema: LabelSchema) -> Iterable[str]:
    """Category label once per gold mention (mention-level frequency counting)."""
    if inst.task in SPAN_TASKS:
        if not inst.gold:
            yield schema.nota_label
        for item in inst.gold:
            yield item.label
    elif inst.task is TaskKind.MRE:
        yield inst.gold.relation
    else:
        yield inst.gold
