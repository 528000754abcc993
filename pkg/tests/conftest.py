from __future__ import annotations

import pytest

from inclusynth.config import demo_dir, load_config
from inclusynth.generator import GeneratedSample, Position, SubstitutionRecord
from inclusynth.labels import Label
from inclusynth.templates import Partition, PlaceholderSlot
from inclusynth.vocabulary import Category, Gender, Orthography, VocabularyEntry, VocabularyStore


def entry(surface: str, category: str = "JOB", gender: str = "neutral", orthography: str = "plain") -> VocabularyEntry:
    return VocabularyEntry(surface, Category(category), Gender(gender), Orthography(orthography))


def make_sample(
    sample_id: str,
    gold: Label = Label.INCLUSIVE,
    *,
    text: str | None = None,
    word_count: int | None = None,
    position: Position = Position.START,
    partition: Partition = Partition.TEST,
    genders: tuple[str, ...] = (),
) -> GeneratedSample:
    """A hand-built sample; when ``genders`` is given its substitutions carry those tags."""
    subs = tuple(
        SubstitutionRecord(PlaceholderSlot(Category.JOB, i, (0, 5)), entry(f"w{i}", "JOB", g), i)
        for i, g in enumerate(genders)
    )
    text = text if text is not None else f"testo del campione {sample_id}"
    return GeneratedSample(
        sample_id=sample_id,
        chunk_id=sample_id.rsplit("-", 1)[0],
        text=text,
        substitutions=subs,
        gold_label=gold,
        word_count=word_count if word_count is not None else len(text.split()),
        target_position=position,
        partition=partition,
        template_ids=(f"t-{sample_id}",),
    )


def small_vocab_store() -> VocabularyStore:
    return VocabularyStore(
        [
            entry("insegnante", "JOB", "neutral"),
            entry("infermiere", "JOB", "masculine"),
            entry("giornalista", "JOB", "neutral"),
            entry("motivato", "ADJ", "masculine"),
            entry("motivata", "ADJ", "feminine"),
            entry("espert*", "ADJ", "neutral", "star"),
            entry("pronto e pronta", "ADJ", "neutral", "pair"),
            entry("contattato", "VERB", "masculine"),
            entry("contattato/a", "VERB", "neutral", "slash"),
        ]
    )


@pytest.fixture
def small_vocab() -> VocabularyStore:
    return small_vocab_store()


@pytest.fixture(scope="session")
def demo_vocab() -> VocabularyStore:
    return VocabularyStore.load(demo_dir() / "vocabulary.csv")


@pytest.fixture
def demo_cfg(tmp_path):
    return load_config(output_dir=tmp_path / "out")


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
