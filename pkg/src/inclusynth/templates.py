"""Seed documents to placeholder templates, and the leakage-free template split."""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyInputError, InvalidParameterError
from .jsonl import iter_jsonl
from .vocabulary import Category, VocabularyStore, tokenize

_SENTENCE_BREAK = re.compile(r"(?<=[.!?:])\s+")
PLACEHOLDER_RE = re.compile(r"\[(JOB|ADJ|VERB)\]")


class TemplateLabel(str, Enum):
    TODO = "TODO"
    INCLUSIVE = "INCLUSIVE"


class Partition(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class SeedDocument:
    doc_id: str
    body: str
    source_tag: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "SeedDocument":
        return cls(str(d["doc_id"]), d.get("body") or "", d.get("source_tag", ""))


def load_seed_corpus(path: str | Path) -> list[SeedDocument]:
    docs = [SeedDocument.from_dict(d) for d in iter_jsonl(path)]
    if not docs:
        raise EmptyInputError(f"{path}: seed corpus is empty")
    seen = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise InvalidParameterError(f"{path}: duplicate doc_id {doc.doc_id!r}")
        if not doc.body.strip():
            raise EmptyInputError(f"{path}: document {doc.doc_id!r} has an empty body")
        seen.add(doc.doc_id)
    return docs


@dataclass(frozen=True)
class PlaceholderSlot:
    category: Category
    index: int
    char_span: tuple[int, int]
    # surface form found in the seed sentence; lets a template be restored verbatim
    original: str = ""

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "index": self.index,
            "char_span": list(self.char_span),
            "original": self.original,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlaceholderSlot":
        return cls(Category(d["category"]), int(d["index"]), tuple(d["char_span"]), d.get("original", ""))


@dataclass(frozen=True)
class TemplateSentence:
    template_id: str
    source_doc: str
    text: str
    placeholders: tuple[PlaceholderSlot, ...] = ()
    template_label: TemplateLabel = TemplateLabel.INCLUSIVE

    def __post_init__(self):
        if (self.template_label is TemplateLabel.TODO) != bool(self.placeholders):
            raise InvalidParameterError(
                f"{self.template_id}: label {self.template_label.value} inconsistent with "
                f"{len(self.placeholders)} placeholder(s)"
            )
        prev_end = 0
        for i, slot in enumerate(self.placeholders):
            start, end = slot.char_span
            if slot.index != i or start < prev_end or end > len(self.text):
                raise InvalidParameterError(f"{self.template_id}: malformed placeholder {slot}")
            if self.text[start:end] != f"[{slot.category.value}]":
                raise InvalidParameterError(f"{self.template_id}: span {slot.char_span} is not a placeholder")
            prev_end = end

    @property
    def word_count(self) -> int:
        return len(self.text.split())

    def render(self, surfaces: Sequence[str]) -> str:
        if len(surfaces) != len(self.placeholders):
            raise InvalidParameterError("one surface per placeholder required")
        out, pos = [], 0
        for slot, surface in zip(self.placeholders, surfaces):
            out.append(self.text[pos : slot.char_span[0]])
            out.append(surface)
            pos = slot.char_span[1]
        out.append(self.text[pos:])
        return "".join(out)

    def restore(self) -> str:
        return self.render([s.original for s in self.placeholders])

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "source_doc": self.source_doc,
            "text": self.text,
            "template_label": self.template_label.value,
            "placeholders": [s.to_dict() for s in self.placeholders],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateSentence":
        return cls(
            d["template_id"],
            d["source_doc"],
            d["text"],
            tuple(PlaceholderSlot.from_dict(p) for p in d.get("placeholders", [])),
            TemplateLabel(d["template_label"]),
        )


def segment_sentences(doc: SeedDocument | str) -> list[str]:
    """Split a document at terminal punctuation (``. ! ? :``) and line breaks.

    Headings such as ``"Descrizione del ruolo:"`` come out as their own
    sentence. Text without terminal punctuation is returned unchanged.
    """
    body = doc.body if isinstance(doc, SeedDocument) else doc
    if not body or not body.strip():
        raise EmptyInputError("cannot segment an empty document")
    sentences = []
    for line in body.splitlines():
        for piece in _SENTENCE_BREAK.split(line.strip()):
            if piece:
                sentences.append(piece)
    return sentences


def annotate_template(
    sentence: str, vocab: VocabularyStore, template_id: str = "", source_doc: str = ""
) -> TemplateSentence:
    """Mask every maximal vocabulary match in ``sentence`` with a category placeholder."""
    tokens = tokenize(sentence)
    matches = []  # (start, end, category, original)
    i = 0
    while i < len(tokens):
        hit = None
        for length in range(min(vocab.max_tokens, len(tokens) - i), 0, -1):
            run = tokens[i : i + length]
            # a multi-word surface only matches across plain whitespace
            if any(sentence[a.end() : b.start()].strip() for a, b in zip(run, run[1:])):
                continue
            entry = vocab.lookup(tuple(m.group(0) for m in run))
            if entry is not None:
                hit = (run[0].start(), run[-1].end(), entry.category, length)
                break
        if hit is None:
            i += 1
            continue
        start, end, category, length = hit
        matches.append((start, end, category, sentence[start:end]))
        i += length

    parts, slots, pos, offset = [], [], 0, 0
    for idx, (start, end, category, original) in enumerate(matches):
        parts.append(sentence[pos:start])
        offset += start - pos
        token = f"[{category.value}]"
        slots.append(PlaceholderSlot(category, idx, (offset, offset + len(token)), original))
        parts.append(token)
        offset += len(token)
        pos = end
    parts.append(sentence[pos:])
    label = TemplateLabel.TODO if slots else TemplateLabel.INCLUSIVE
    return TemplateSentence(template_id, source_doc, "".join(parts), tuple(slots), label)


def extract_templates(docs: Iterable[SeedDocument], vocab: VocabularyStore) -> list[TemplateSentence]:
    templates = []
    for doc in docs:
        for k, sentence in enumerate(segment_sentences(doc)):
            templates.append(annotate_template(sentence, vocab, f"{doc.doc_id}-s{k:03d}", doc.doc_id))
    return templates


@dataclass(frozen=True)
class TemplateSplit:
    train_ids: frozenset[str]
    test_ids: frozenset[str]
    ratio: float
    seed: int
    # permutation order, kept so manifests are reproducible line by line
    order: tuple[str, ...] = field(default=(), compare=False)

    def partition_of(self, template_id: str) -> Partition:
        if template_id in self.train_ids:
            return Partition.TRAIN
        if template_id in self.test_ids:
            return Partition.TEST
        raise KeyError(template_id)

    def to_rows(self) -> list[dict]:
        ids = self.order or sorted(self.train_ids | self.test_ids)
        return [{"template_id": t, "partition": self.partition_of(t).value} for t in ids]

    @classmethod
    def from_rows(cls, rows: Iterable[dict], ratio: float, seed: int) -> "TemplateSplit":
        rows = list(rows)
        train = frozenset(r["template_id"] for r in rows if r["partition"] == Partition.TRAIN.value)
        test = frozenset(r["template_id"] for r in rows if r["partition"] == Partition.TEST.value)
        return cls(train, test, ratio, seed, tuple(r["template_id"] for r in rows))


def split_templates(templates: Sequence[TemplateSentence], ratio: float = 0.7, seed: int = 42) -> TemplateSplit:
    """Partition templates (not samples) into train/test before any expansion."""
    if not templates:
        raise EmptyInputError("no templates to split")
    if not 0.0 < ratio < 1.0:
        raise InvalidParameterError(f"ratio must be in (0, 1), got {ratio}")
    ids = sorted({t.template_id for t in templates})
    if len(ids) != len(templates):
        raise InvalidParameterError("template ids must be unique")
    random.Random(seed).shuffle(ids)
    n_train = math.floor(ratio * len(ids) + 0.5)
    return TemplateSplit(frozenset(ids[:n_train]), frozenset(ids[n_train:]), ratio, seed, tuple(ids))
