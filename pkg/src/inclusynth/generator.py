"""Chunk merging, placeholder expansion, gold labels and target positions."""

from __future__ import annotations

import bisect
import math
import random
import re
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import InvalidParameterError, LeakageError
from .labels import Label
from .templates import Partition, PlaceholderSlot, TemplateSentence, TemplateSplit
from .vocabulary import Gender, VocabularyEntry, VocabularyStore

_TOKEN = re.compile(r"\S+")


class Position(str, Enum):
    START = "start"
    MIDDLE = "middle"
    END = "end"
    NONE = "none"


@dataclass(frozen=True)
class TemplateChunk:
    chunk_id: str
    member_templates: tuple[str, ...]
    text: str
    target_length: int
    partition: Partition
    placeholders: tuple[PlaceholderSlot, ...] = ()
    max_member_length: int = 0

    @property
    def word_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class SubstitutionRecord:
    slot: PlaceholderSlot
    entry: VocabularyEntry
    word_index: int
    char_span: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.entry.category is not self.slot.category:
            raise InvalidParameterError(
                f"{self.entry.surface!r} is {self.entry.category.value}, slot wants {self.slot.category.value}"
            )

    def to_dict(self) -> dict:
        return {
            "slot": self.slot.to_dict(),
            "entry": self.entry.to_dict(),
            "word_index": self.word_index,
            "char_span": list(self.char_span),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubstitutionRecord":
        return cls(
            PlaceholderSlot.from_dict(d["slot"]),
            VocabularyEntry.from_dict(d["entry"]),
            int(d["word_index"]),
            tuple(d.get("char_span", (0, 0))),
        )


@dataclass(frozen=True)
class GeneratedSample:
    sample_id: str
    chunk_id: str
    text: str
    substitutions: tuple[SubstitutionRecord, ...]
    gold_label: Label
    word_count: int
    target_position: Position
    partition: Partition
    template_ids: tuple[str, ...] = ()
    target_length: int = 0

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "chunk_id": self.chunk_id,
            "text": self.text,
            "substitutions": [s.to_dict() for s in self.substitutions],
            "gold_label": self.gold_label.value,
            "word_count": self.word_count,
            "target_position": self.target_position.value,
            "partition": self.partition.value,
            "template_ids": list(self.template_ids),
            "target_length": self.target_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratedSample":
        return cls(
            d["sample_id"],
            d["chunk_id"],
            d["text"],
            tuple(SubstitutionRecord.from_dict(s) for s in d["substitutions"]),
            Label(d["gold_label"]),
            int(d["word_count"]),
            Position(d["target_position"]),
            Partition(d["partition"]),
            tuple(d.get("template_ids", ())),
            int(d.get("target_length", 0)),
        )


@dataclass(frozen=True)
class ExpansionPolicy:
    mode: str = "capped"  # "exhaustive" or "capped"
    cap: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exhaustive", "capped"):
            raise InvalidParameterError(f"unknown expansion policy {self.mode!r}")
        if self.mode == "capped" and self.cap < 1:
            raise InvalidParameterError("cap must be >= 1")


def merge_chunks(
    templates: Sequence[TemplateSentence],
    target_length: int,
    partition: Partition | str = Partition.TEST,
    split: TemplateSplit | None = None,
) -> list[TemplateChunk]:
    """Greedily pack consecutive templates into chunks of about ``target_length`` words.

    A chunk is closed when the next sentence would push it past the target;
    every chunk holds at least one sentence, so a chunk only exceeds the
    target when a single sentence does.
    """
    if target_length < 1:
        raise InvalidParameterError(f"target_length must be >= 1, got {target_length}")
    partition = Partition(partition)
    if split is not None:
        for t in templates:
            if split.partition_of(t.template_id) is not partition:
                raise LeakageError(f"template {t.template_id} is not in the {partition.value} partition")

    groups: list[list[TemplateSentence]] = []
    current: list[TemplateSentence] = []
    words = 0
    for t in templates:
        w = t.word_count
        if current and words + w > target_length:
            groups.append(current)
            current, words = [], 0
        current.append(t)
        words += w
    if current:
        groups.append(current)

    chunks = []
    for k, members in enumerate(groups):
        texts, slots, offset = [], [], 0
        for t in members:
            for s in t.placeholders:
                start, end = s.char_span
                slots.append(PlaceholderSlot(s.category, len(slots), (start + offset, end + offset), s.original))
            texts.append(t.text)
            offset += len(t.text) + 1
        chunks.append(
            TemplateChunk(
                chunk_id=f"{partition.value}-L{target_length}-c{k:05d}",
                member_templates=tuple(t.template_id for t in members),
                text=" ".join(texts),
                target_length=target_length,
                partition=partition,
                placeholders=tuple(slots),
                max_member_length=max(t.word_count for t in members),
            )
        )
    return chunks


def derive_gold_label(substitutions: Iterable[SubstitutionRecord]) -> Label:
    """INCLUSIVE iff every substituted word is gender-neutral (vacuously for none)."""
    for sub in substitutions:
        if sub.entry.gender is not Gender.NEUTRAL:
            return Label.NONINCLUSIVE
    return Label.INCLUSIVE


def _position_of(word_index: int, word_count: int) -> Position:
    f = word_index / max(word_count - 1, 1)
    if f < 1 / 3:
        return Position.START
    if f < 2 / 3:
        return Position.MIDDLE
    return Position.END


def locate_target(sample: GeneratedSample) -> Position:
    if not sample.substitutions:
        return Position.NONE
    return _position_of(sample.substitutions[0].word_index, sample.word_count)


def _word_index(token_starts: Sequence[int], char_start: int) -> int:
    # index of the whitespace token holding char_start; a placeholder glued to
    # preceding punctuation shares that token
    return bisect.bisect_right(token_starts, char_start) - 1


def _combination_indices(total: int, policy: ExpansionPolicy, chunk_id: str) -> Sequence[int]:
    if policy.mode == "exhaustive" or total <= policy.cap:
        return range(total)
    rng = random.Random(f"{policy.seed}:{chunk_id}")
    if total <= sys.maxsize:
        picked = rng.sample(range(total), policy.cap)
    else:
        seen: set[int] = set()
        while len(seen) < policy.cap:
            seen.add(rng.randrange(total))
        picked = list(seen)
    return sorted(picked)


def expansion_count(chunk: TemplateChunk, vocab: VocabularyStore) -> int:
    return math.prod(len(vocab.category(s.category)) for s in chunk.placeholders)


def expand_template(
    chunk: TemplateChunk, vocab: VocabularyStore, policy: ExpansionPolicy = ExpansionPolicy()
) -> list[GeneratedSample]:
    """Fill every placeholder of ``chunk`` with vocabulary surfaces.

    Exhaustive mode yields the whole cross product in ``itertools.product``
    order; capped mode draws at most ``policy.cap`` distinct combinations,
    seeded per chunk.
    """
    choices = [vocab.category(s.category) for s in chunk.placeholders]
    radices = [len(c) for c in choices]
    total = math.prod(radices)
    samples = []
    for k, index in enumerate(_combination_indices(total, policy, chunk.chunk_id)):
        digits = []
        for radix in reversed(radices):
            index, d = divmod(index, radix)
            digits.append(d)
        entries = [c[d] for c, d in zip(choices, reversed(digits))]

        parts, spans, pos, offset = [], [], 0, 0
        for slot, entry in zip(chunk.placeholders, entries):
            start, end = slot.char_span
            parts.append(chunk.text[pos:start])
            offset += start - pos
            parts.append(entry.surface)
            spans.append((offset, offset + len(entry.surface)))
            offset += len(entry.surface)
            pos = end
        parts.append(chunk.text[pos:])
        text = "".join(parts)
        starts = [m.start() for m in _TOKEN.finditer(text)]
        word_count = len(starts)
        subs = tuple(
            SubstitutionRecord(slot, entry, _word_index(starts, span[0]), span)
            for slot, entry, span in zip(chunk.placeholders, entries, spans)
        )
        samples.append(
            GeneratedSample(
                sample_id=f"{chunk.chunk_id}-{k:05d}",
                chunk_id=chunk.chunk_id,
                text=text,
                substitutions=subs,
                gold_label=derive_gold_label(subs),
                word_count=word_count,
                target_position=_position_of(subs[0].word_index, word_count) if subs else Position.NONE,
                partition=chunk.partition,
                template_ids=chunk.member_templates,
                target_length=chunk.target_length,
            )
        )
    return samples


def generate_samples(
    templates: Sequence[TemplateSentence],
    split: TemplateSplit,
    vocab: VocabularyStore,
    target_lengths: Iterable[int],
    policy: ExpansionPolicy = ExpansionPolicy(),
) -> list[GeneratedSample]:
    """Chunk and expand each partition separately, in a fixed order."""
    target_lengths = list(target_lengths)
    samples: list[GeneratedSample] = []
    for partition in (Partition.TRAIN, Partition.TEST):
        members = [t for t in templates if split.partition_of(t.template_id) is partition]
        if not members:
            continue
        for target in target_lengths:
            for chunk in merge_chunks(members, target, partition):
                samples.extend(expand_template(chunk, vocab, policy))
    return samples
