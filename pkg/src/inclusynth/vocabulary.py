"""Gender-tagged substitution vocabulary."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import InvalidParameterError, MissingVocabularyError
from .jsonl import iter_jsonl

# A "word" keeps gender-neutral marks attached: espert*, pronto/a.
TOKEN_RE = re.compile(r"\w+(?:/\w+)*\*?")


class Category(str, Enum):
    JOB = "JOB"
    ADJ = "ADJ"
    VERB = "VERB"


class Gender(str, Enum):
    NEUTRAL = "neutral"
    MASCULINE = "masculine"
    FEMININE = "feminine"


class Orthography(str, Enum):
    PLAIN = "plain"
    STAR = "star"
    SLASH = "slash"
    PAIR = "pair"


_GENDER_ALIASES = {
    "neutral": Gender.NEUTRAL,
    "neutro": Gender.NEUTRAL,
    "masculine": Gender.MASCULINE,
    "maschile": Gender.MASCULINE,
    "feminine": Gender.FEMININE,
    "femminile": Gender.FEMININE,
}

# Category lookup order when one surface is listed under several categories.
CATEGORY_PRIORITY = (Category.JOB, Category.ADJ, Category.VERB)


def tokenize(text: str) -> list[re.Match]:
    return list(TOKEN_RE.finditer(text))


def infer_orthography(surface: str) -> Orthography:
    if "*" in surface:
        return Orthography.STAR
    if "/" in surface:
        return Orthography.SLASH
    if re.search(r"\s(?:e|o)\s", surface):
        return Orthography.PAIR
    return Orthography.PLAIN


@dataclass(frozen=True)
class VocabularyEntry:
    surface: str
    category: Category
    gender: Gender
    orthography: Orthography = Orthography.PLAIN

    def __post_init__(self):
        if not self.surface.strip():
            raise InvalidParameterError("vocabulary surface must be non-empty")
        if self.orthography is not Orthography.PLAIN and self.gender is not Gender.NEUTRAL:
            raise InvalidParameterError(
                f"{self.surface!r}: {self.orthography.value} orthography must be tagged neutral"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "VocabularyEntry":
        surface = str(d["surface"]).strip()
        try:
            category = Category(str(d["category"]).strip().upper())
        except ValueError:
            raise InvalidParameterError(f"{surface!r}: unknown category {d['category']!r}") from None
        gender = _GENDER_ALIASES.get(str(d["gender"]).strip().lower())
        if gender is None:
            raise InvalidParameterError(f"{surface!r}: unknown gender {d['gender']!r}")
        ortho = d.get("orthography")
        orthography = Orthography(ortho.strip().lower()) if ortho else infer_orthography(surface)
        return cls(surface, category, gender, orthography)

    def to_dict(self) -> dict:
        return {
            "surface": self.surface,
            "category": self.category.value,
            "gender": self.gender.value,
            "orthography": self.orthography.value,
        }


def _key(text: str) -> tuple[str, ...]:
    # case-insensitive, accent-sensitive
    return tuple(m.group(0).casefold() for m in tokenize(text))


class VocabularyStore:
    """Entries grouped by category plus a token-sequence index for matching."""

    def __init__(self, entries: Iterable[VocabularyEntry]):
        self.entries: list[VocabularyEntry] = []
        self._by_category: dict[Category, list[VocabularyEntry]] = {c: [] for c in Category}
        self._index: dict[tuple[str, ...], VocabularyEntry] = {}
        seen = set()
        for e in entries:
            if (e.surface, e.category) in seen:
                continue
            seen.add((e.surface, e.category))
            self.entries.append(e)
            self._by_category[e.category].append(e)
        for cat in CATEGORY_PRIORITY:
            for e in self._by_category[cat]:
                self._index.setdefault(_key(e.surface), e)
        self.max_tokens = max((len(k) for k in self._index), default=0)

    def __len__(self) -> int:
        return len(self.entries)

    def category(self, category: Category | str) -> list[VocabularyEntry]:
        category = Category(category)
        found = self._by_category.get(category, [])
        if not found:
            raise MissingVocabularyError(category.value)
        return found

    def lookup(self, tokens: tuple[str, ...]) -> VocabularyEntry | None:
        return self._index.get(tuple(t.casefold() for t in tokens))

    @classmethod
    def load(cls, path: str | Path) -> "VocabularyStore":
        path = Path(path)
        if path.suffix.lower() == ".csv":
            with open(path, encoding="utf-8", newline="") as fh:
                rows = [r for r in csv.DictReader(fh) if r.get("surface", "").strip()]
        else:
            rows = list(iter_jsonl(path))
        return cls(VocabularyEntry.from_dict(r) for r in rows)
