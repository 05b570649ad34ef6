"""Deterministic synthetic fixture datasets for the four tasks.

Real corpora are distributed under their own licenses and arrive through
external converters; these fixtures exist so the whole pipeline - rendering,
backends, caching, evaluation - can be exercised end to end with nothing but
this repository. Every instance gets a unique tiny PNG so that image-keyed
lookups (caching, the gold oracle) behave like they would on real data.

The same (task, size, seed) always builds byte-identical datasets.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Optional

from ._rng import SplitMix64, derive_seed
from .model import (
    Dataset,
    ImageRef,
    LabeledSpan,
    LabelSchema,
    MieInstance,
    RelationGold,
    Sentence,
    Span,
    TaskKind,
    load_schema,
    write_dataset,
)

DEFAULT_SEED = 20240601
FIXTURE_SCHEMAS = {
    TaskKind.MNER: "twitter17",
    TaskKind.MRE: "mnre_v2",
    TaskKind.MIED: "m2e2_image",
    TaskKind.MTED: "m2e2_text",
}

MIED_CAPTION = "This is an image attached to a news article."


def write_png(path: Path, seed: int, size: int = 6) -> None:
    """Tiny deterministic RGB PNG; distinct seeds give distinct bytes."""
    rng = SplitMix64(seed)
    raw = b""
    for _ in range(size):
        raw += b"\x00"  # no filter
        for _ in range(size):
            raw += bytes([rng.randbelow(256), rng.randbelow(256), rng.randbelow(256)])

    def chunk(kind: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + kind
            + data
            + struct.pack(">I", zlib.crc32(kind + data))
        )

    ihdr = struct.pack(">IIBBBBB", size, size, 8, 2, 0, 0, 0)
    png = (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw, 9))
        + chunk(b"IEND", b"")
    )
    path.write_bytes(png)


class _SentenceBuilder:
    """Builds a sentence left to right while recording span offsets."""

    def __init__(self):
        self.parts: list[str] = []
        self.length = 0
        self.spans: list[tuple[str, int]] = []

    def text(self, fragment: str) -> "_SentenceBuilder":
        self.parts.append(fragment)
        self.length += len(fragment)
        return self

    def mention(self, surface: str) -> "_SentenceBuilder":
        self.spans.append((surface, self.length))
        return self.text(surface)

    def build(self) -> str:
        return "".join(self.parts)


_PERSONS = (
    "Alice Turner", "Marco Ruiz", "Wei Zhang", "Priya Nair", "Tom Ellery",
    "Sofia Borg", "Dmitri Volkov", "Hana Kato", "Leila Haddad", "Owen Doyle",
)
_LOCATIONS = (
    "Osaka", "Lisbon", "Nairobi", "Tallinn", "Cusco",
    "Aleppo", "Reykjavik", "Davao", "Gdansk", "Medellin",
)
_ORGS = (
    "Nortech", "Bluewave Media", "Kestrel Labs", "Aramint", "Valline Group",
    "Copperfield FC", "Hexagon Press", "Mirabel Bank", "Talwind", "Qorvex",
)
_MISCS = (
    "Olympics", "Diwali", "Eurovision", "Ramadan", "Oktoberfest",
    "Hanukkah", "Carnival", "Songkran",
)

_TRIGGERS = {
    "movement_transport": ("convoy", "shipment", "voyage", "airlift"),
    "contact_phone_write": ("call", "letter", "telegram", "memo"),
    "conflict_attack": ("ambush", "bombing", "raid", "assault"),
    "contact_meet": ("summit", "reunion", "gathering", "huddle"),
    "justice_arrest_jail": ("arrest", "detention", "roundup", "booking"),
    "conflict_demonstrate": ("protest", "rally", "picket", "sit-in"),
    "life_die": ("funeral", "casualty", "drowning", "overdose"),
    "transaction_transfer_money": ("payment", "donation", "ransom", "payout"),
}


def _unique(rng: SplitMix64, pool, n: int) -> list:
    return rng.sample(pool, n)


def _mner_instance(i: int, rng: SplitMix64, schema: LabelSchema, image: Optional[ImageRef]) -> MieInstance:
    pattern = rng.randbelow(5)
    b = _SentenceBuilder()
    gold: list[tuple[str, str]] = []  # (surface, label) in mention order

    def take(pool):
        return pool[rng.randbelow(len(pool))]

    if pattern == 0:
        p1, p2 = _unique(rng, _PERSONS, 2)
        loc = take(_LOCATIONS)
        b.text("").mention(p1).text(" met ").mention(p2).text(" near ").mention(loc)
        gold += [(p1, "person"), (p2, "person"), (loc, "location")]
    elif pattern == 1:
        org, loc = take(_ORGS), take(_LOCATIONS)
        b.text("").mention(org).text(" opened a studio in ").mention(loc)
        gold += [(org, "organization"), (loc, "location")]
    elif pattern == 2:
        p, org, misc = take(_PERSONS), take(_ORGS), take(_MISCS)
        b.text("").mention(p).text(" joined ").mention(org).text(" right after the ").mention(misc)
        gold += [(p, "person"), (org, "organization"), (misc, "miscellaneous")]
    elif pattern == 3:
        misc, loc = take(_MISCS), take(_LOCATIONS)
        b.text("Crowds celebrated the ").mention(misc).text(" across ").mention(loc)
        gold += [(misc, "miscellaneous"), (loc, "location")]
    else:
        b.text("A quiet morning with no names in the news")

    b.text(f" (case {i}).")
    text = b.build()
    offsets = dict(b.spans)
    items = tuple(
        LabeledSpan(surface=s, label=l, char_start=offsets[s]) for s, l in gold
    )
    return MieInstance(
        id=f"mner-{i:04d}",
        task=TaskKind.MNER,
        sentence=Sentence(text=text),
        gold=items,
        image=image,
    )


_MRE_PATTERNS = (
    ("per", "loc", "{h} was photographed outside {t}"),
    ("per", "org", "{h} signed a contract with {t}"),
    ("per", "per", "{h} shared the stage with {t}"),
    ("org", "loc", "{h} runs its plant in {t}"),
    ("loc", "loc", "{h} borders the district of {t}"),
)
_MRE_POOLS = {"per": _PERSONS, "org": _ORGS, "loc": _LOCATIONS}


def _mre_instance(i: int, rng: SplitMix64, schema: LabelSchema, image: Optional[ImageRef]) -> MieInstance:
    head_type, tail_type, template = _MRE_PATTERNS[rng.randbelow(len(_MRE_PATTERNS))]
    if head_type == tail_type:
        head, tail = _unique(rng, _MRE_POOLS[head_type], 2)
    else:
        head = _MRE_POOLS[head_type][rng.randbelow(len(_MRE_POOLS[head_type]))]
        tail = _MRE_POOLS[tail_type][rng.randbelow(len(_MRE_POOLS[tail_type]))]
    candidates = schema.constrained_relations(head_type, tail_type)
    # roughly one in five instances carries no relation (NOTA)
    if rng.randbelow(5) == 0:
        relation = schema.nota_label
    else:
        relation = candidates[rng.randbelow(len(candidates))]
    body = template.format(h=head, t=tail)
    text = f"{body} (case {i})."
    return MieInstance(
        id=f"mre-{i:04d}",
        task=TaskKind.MRE,
        sentence=Sentence(text=text),
        gold=RelationGold(
            head=Span(surface=head, char_start=text.index(head)),
            head_type=head_type,
            tail=Span(surface=tail, char_start=text.index(tail)),
            tail_type=tail_type,
            relation=relation,
        ),
        image=image,
    )


def _mied_instance(i: int, rng: SplitMix64, schema: LabelSchema, image: Optional[ImageRef]) -> MieInstance:
    if rng.randbelow(5) == 0:
        event = schema.nota_label
    else:
        event = schema.label_ids[rng.randbelow(len(schema.label_ids))]
    return MieInstance(
        id=f"mied-{i:04d}",
        task=TaskKind.MIED,
        sentence=Sentence(text=MIED_CAPTION),
        gold=event,
        image=image,
    )


def _mted_instance(i: int, rng: SplitMix64, schema: LabelSchema, image: Optional[ImageRef]) -> MieInstance:
    n_triggers = (0, 1, 1, 1, 2)[rng.randbelow(5)]
    labels = _unique(rng, list(_TRIGGERS), n_triggers)
    words = [
        _TRIGGERS[label][rng.randbelow(len(_TRIGGERS[label]))] for label in labels
    ]
    b = _SentenceBuilder()
    if n_triggers == 0:
        b.text("The afternoon bulletin covered only the weather")
    elif n_triggers == 1:
        b.text("Witnesses described the ").mention(words[0]).text(" near the old bridge")
    else:
        b.text("Reports of a ").mention(words[0]).text(" came in just before the ").mention(
            words[1]
        ).text(" downtown")
    b.text(f" (case {i}).")
    text = b.build()
    offsets = dict(b.spans)
    gold = tuple(
        LabeledSpan(surface=w, label=l, char_start=offsets[w])
        for w, l in zip(words, labels)
    )
    return MieInstance(
        id=f"mted-{i:04d}",
        task=TaskKind.MTED,
        sentence=Sentence(text=text),
        gold=gold,
        image=image,
    )


_BUILDERS = {
    TaskKind.MNER: _mner_instance,
    TaskKind.MRE: _mre_instance,
    TaskKind.MIED: _mied_instance,
    TaskKind.MTED: _mted_instance,
}


def build_fixture_dataset(
    task: TaskKind,
    size: int = 60,
    seed: int = DEFAULT_SEED,
    *,
    schema: Optional[LabelSchema] = None,
    image_dir: Optional[Path] = None,
    image_prefix: str = "",
) -> Dataset:
    """Synthesize a dataset; writes one PNG per instance when image_dir is set."""
    schema = schema or load_schema(FIXTURE_SCHEMAS[task])
    build = _BUILDERS[task]
    task_offset = zlib.crc32(task.value.encode("ascii"))
    instances = []
    for i in range(size):
        rng = SplitMix64(derive_seed(seed, task_offset + i))
        image = None
        if image_dir is not None:
            image_dir.mkdir(parents=True, exist_ok=True)
            name = f"{image_prefix}{task.value}_{i:04d}.png"
            path = image_dir / name
            write_png(path, derive_seed(seed, task_offset + i + 7_000_000))
            image = ImageRef(path=str(path))
        inst = build(i, rng, schema, image)
        for surface, _ in _gold_surfaces(inst):
            count = inst.sentence.text.count(surface)
            if count != 1:
                raise AssertionError(
                    f"fixture bug: surface {surface!r} occurs {count} times in "
                    f"{inst.sentence.text!r}"
                )
        instances.append(inst)
    return Dataset(schema_id=schema.schema_id, task=task, instances=tuple(instances))


def _gold_surfaces(inst: MieInstance):
    if inst.task in (TaskKind.MNER, TaskKind.MTED):
        return [(g.surface, g.label) for g in inst.gold]
    if inst.task is TaskKind.MRE:
        return [(inst.gold.head.surface, ""), (inst.gold.tail.surface, "")]
    return []


def write_fixture_tree(root: Path, size: int = 60, seed: int = DEFAULT_SEED) -> dict[TaskKind, Path]:
    """Build all four fixture datasets under ``root`` with relative image paths."""
    root = Path(root)
    image_dir = root / "images"
    paths = {}
    for task in TaskKind:
        dataset = build_fixture_dataset(task, size=size, seed=seed, image_dir=image_dir)
        relative = Dataset(
            schema_id=dataset.schema_id,
            task=task,
            instances=tuple(
                MieInstance(
                    id=inst.id,
                    task=inst.task,
                    sentence=inst.sentence,
                    gold=inst.gold,
                    image=ImageRef(path=f"images/{Path(inst.image.path).name}"),
                )
                for inst in dataset.instances
            ),
        )
        out = root / f"{task.value}.jsonl"
        write_dataset(out, relative)
        paths[task] = out
    return paths
