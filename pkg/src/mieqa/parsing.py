"""Turning raw backend generations into spans and labels.

Parsing is total: no input string raises. Failed parses map to the NOTA
label (the reject class), which the pipeline's NOTA filter then removes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .model import LabelSchema, Sentence, Span
from .prompting import OptionSet


class ParseMethod(str, Enum):
    EXACT_LETTER = "exact_letter"
    LETTER_PREFIX = "letter_prefix"
    OPTION_TEXT_MATCH = "option_text_match"
    LABEL_TEXT_MATCH = "label_text_match"
    FAILED = "failed"


@dataclass(frozen=True)
class ParseOutcome:
    value: str
    method: ParseMethod
    raw: str

    @property
    def failed(self) -> bool:
        return self.method is ParseMethod.FAILED


@dataclass(frozen=True)
class SpanListResult:
    spans: tuple[Span, ...]
    dropped: int  # items that could not be grounded in the sentence


# Trailing punctuation that may cling to a generated span; deliberately NOT
# including '.' inside the surface (keeps "U.S." intact when it ends an item).
_STRIP_CHARS = " \t\r\n"
_TRAIL_PUNCT = ".,\"')"
_LEAD_PUNCT = "\"'("


def _clean_item(item: str) -> str:
    item = item.strip(_STRIP_CHARS)
    while item and item[-1] in _TRAIL_PUNCT:
        item = item[:-1]
    while item and item[0] in _LEAD_PUNCT:
        item = item[1:]
    return item.strip(_STRIP_CHARS)


def parse_span_list(
    text: str, sentence: Sentence, *, case_sensitive: bool = True
) -> SpanListResult:
    """Split a generation on commas/newlines and keep items grounded in the sentence.

    Order is preserved, exact duplicates keep the first occurrence, and each
    kept span records the first occurrence offset. Ungrounded items are
    dropped silently and counted.
    """
    haystack = sentence.text if case_sensitive else sentence.text.lower()
    spans: list[Span] = []
    seen: set[str] = set()
    dropped = 0
    for raw_item in re.split(r"[,\n]", text):
        item = _clean_item(raw_item)
        if not item:
            continue
        needle = item if case_sensitive else item.lower()
        pos = haystack.find(needle)
        if pos < 0:
            dropped += 1
            continue
        if item in seen:
            continue
        seen.add(item)
        spans.append(Span(surface=sentence.text[pos : pos + len(item)], char_start=pos))
    return SpanListResult(spans=tuple(spans), dropped=dropped)


_LETTER_ONLY = re.compile(r"^([A-Za-z])[.)]?$")
_LETTER_PREFIX = re.compile(r"^([A-Z])[.)]")


def parse_choice(text: str, options: OptionSet, nota_label: str) -> ParseOutcome:
    """Resolve a generation to one option label.

    Cascade: (1) the whole trimmed generation is a single option letter,
    optionally with '.' or ')'; (2) the generation starts with a punctuated
    letter token like "B."; (3) exactly one option's text occurs in the
    generation (case-insensitive). Anything else - including ambiguous
    multi-option matches - is a failed outcome carrying the NOTA label.
    """
    letters = {o.letter for o in options.options}
    stripped = text.strip()

    m = _LETTER_ONLY.match(stripped)
    if m and m.group(1).upper() in letters:
        return ParseOutcome(
            value=options.decode_map[m.group(1).upper()],
            method=ParseMethod.EXACT_LETTER,
            raw=text,
        )

    # A bare unpunctuated leading letter is not accepted here: generations
    # like "I think ..." would collide with option letter I.
    m = _LETTER_PREFIX.match(stripped)
    if m and m.group(1) in letters:
        return ParseOutcome(
            value=options.decode_map[m.group(1)],
            method=ParseMethod.LETTER_PREFIX,
            raw=text,
        )

    lowered = stripped.lower()
    hits = [o for o in options.options if o.text and o.text.lower() in lowered]
    if len(hits) == 1:
        return ParseOutcome(
            value=hits[0].label, method=ParseMethod.OPTION_TEXT_MATCH, raw=text
        )

    return ParseOutcome(value=nota_label, method=ParseMethod.FAILED, raw=text)


def parse_vanilla_label(
    text: str, schema: LabelSchema, candidates: list[str]
) -> ParseOutcome:
    """Match a free-text generation against candidate label display names."""
    stripped = text.strip()
    lowered = stripped.lower()
    by_display = {schema.display(c).lower(): c for c in candidates}

    if lowered in by_display:
        return ParseOutcome(
            value=by_display[lowered], method=ParseMethod.LABEL_TEXT_MATCH, raw=text
        )

    contained = [c for disp, c in by_display.items() if disp in lowered]
    if len(contained) == 1:
        return ParseOutcome(
            value=contained[0], method=ParseMethod.LABEL_TEXT_MATCH, raw=text
        )

    return ParseOutcome(value=schema.nota_label, method=ParseMethod.FAILED, raw=text)
