"""Prompt definitions, per-sample rendering and chat-format training rows."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

from .errors import ConfigError, EmptyInputError, InvalidParameterError, LeakageError, PromptLookupError
from .generator import GeneratedSample
from .jsonl import write_jsonl
from .labels import ANSWER_TEXT, Label
from .templates import Partition

_SLOT_RE = re.compile(r"\{(text|examples)\}")
_FRONT_MATTER_RE = re.compile(r"\A---\s*\n(.*?)\n---\s*\n?(.*)\Z", re.S)


class Strategy(str, Enum):
    ZSL = "ZSL"
    FSL = "FSL"
    ZSLCOT = "ZSLCOT"


class AnswerContract(str, Enum):
    BARE = "bare"  # the label alone
    LABEL_LINE = "label_line"  # reasoning, then "Label: <X>"

    def format(self, label: Label) -> str:
        answer = ANSWER_TEXT[label]
        return f"Label: {answer}" if self is AnswerContract.LABEL_LINE else answer


@dataclass(frozen=True)
class PromptSpec:
    prompt_id: str
    strategy: Strategy
    instruction: str
    exemplars: tuple[tuple[str, Label], ...] = ()
    answer_contract: AnswerContract = AnswerContract.BARE
    # FSL prompts whose exemplars are drawn from the train partition at run time
    auto_exemplars: bool = False

    def __post_init__(self):
        if not re.fullmatch(r"[a-z]+#\d+", self.prompt_id):
            raise ConfigError(f"prompt_id {self.prompt_id!r} must look like '<strategy>#<index>'")
        if self.instruction.count("{text}") != 1:
            raise ConfigError(f"{self.prompt_id}: instruction needs exactly one {{text}} slot")
        if self.strategy is Strategy.FSL:
            if "{examples}" not in self.instruction:
                raise ConfigError(f"{self.prompt_id}: few-shot instruction needs an {{examples}} slot")
            if not self.exemplars and not self.auto_exemplars:
                raise ConfigError(f"{self.prompt_id}: few-shot prompt without exemplars")
        elif self.exemplars or self.auto_exemplars:
            raise ConfigError(f"{self.prompt_id}: only few-shot prompts take exemplars")

    def format_answer(self, label: Label) -> str:
        return self.answer_contract.format(label)


@dataclass(frozen=True)
class PromptInstance:
    prompt_id: str
    sample_id: str
    rendered_text: str


@dataclass(frozen=True)
class ChatRow:
    question: str
    text: str
    response: str
    prompt_id: str = field(default="", compare=False)
    sample_id: str = field(default="", compare=False)
    gold_label: Label | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {"question": self.question, "text": self.text, "response": self.response}


def parse_prompt_file(path: str | Path) -> PromptSpec:
    path = Path(path)
    m = _FRONT_MATTER_RE.match(path.read_text(encoding="utf-8"))
    if not m:
        raise ConfigError(f"{path}: missing front matter")
    meta = yaml.safe_load(m.group(1)) or {}
    try:
        raw_exemplars = meta.get("exemplars") or []
        auto = raw_exemplars == "auto"
        exemplars = () if auto else tuple((e["text"], Label(e["label"])) for e in raw_exemplars)
        return PromptSpec(
            prompt_id=str(meta["prompt_id"]),
            strategy=Strategy(str(meta["strategy"]).upper()),
            instruction=m.group(2).strip("\n"),
            exemplars=exemplars,
            answer_contract=AnswerContract(meta.get("answer_contract", "bare")),
            auto_exemplars=auto,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_prompt_dir(directory: str | Path) -> dict[str, PromptSpec]:
    specs: dict[str, PromptSpec] = {}
    for path in sorted(Path(directory).glob("*.md")):
        spec = parse_prompt_file(path)
        if spec.prompt_id in specs:
            raise ConfigError(f"{path}: duplicate prompt_id {spec.prompt_id}")
        specs[spec.prompt_id] = spec
    if not specs:
        raise ConfigError(f"{directory}: no prompt definitions found")
    return dict(sorted(specs.items()))


def draw_exemplars(
    pool: Sequence[GeneratedSample], seed: int = 0, per_class: int = 1, max_words: int = 40
) -> tuple[tuple[str, Label], ...]:
    """Pick ``per_class`` train samples of each class, short ones first."""
    chosen = []
    rng = random.Random(seed)
    for label in (Label.INCLUSIVE, Label.NONINCLUSIVE):
        candidates = sorted(
            (s for s in pool if s.gold_label is label and s.partition is Partition.TRAIN),
            key=lambda s: s.sample_id,
        )
        short = [s for s in candidates if s.word_count <= max_words] or candidates
        if len(short) < per_class:
            raise InvalidParameterError(f"not enough {label.value} train samples for few-shot exemplars")
        chosen.extend((s.text, label) for s in rng.sample(short, per_class))
    return tuple(chosen)


def attach_exemplars(
    specs: Mapping[str, PromptSpec], pool: Sequence[GeneratedSample], seed: int = 0
) -> dict[str, PromptSpec]:
    out = {}
    for pid, spec in specs.items():
        if spec.auto_exemplars and not spec.exemplars:
            spec = replace(spec, exemplars=draw_exemplars(pool, seed))
        out[pid] = spec
    return out


def _fill(spec: PromptSpec, text: str) -> str:
    if spec.strategy is Strategy.FSL and not spec.exemplars:
        raise InvalidParameterError(f"{spec.prompt_id}: exemplars have not been drawn yet")
    examples = "\n\n".join(
        f"Testo: {ex_text}\nRisposta: {spec.format_answer(label)}" for ex_text, label in spec.exemplars
    )
    values = {"text": text, "examples": examples}
    return _SLOT_RE.sub(lambda m: values[m.group(1)], spec.instruction)


def get_prompt(registry: Mapping[str, PromptSpec], prompt_id: str) -> PromptSpec:
    try:
        return registry[prompt_id]
    except KeyError:
        raise PromptLookupError(f"unknown prompt_id {prompt_id!r}") from None


def render_prompt(
    spec: PromptSpec | str, sample: GeneratedSample, registry: Mapping[str, PromptSpec] | None = None
) -> PromptInstance:
    if isinstance(spec, str):
        spec = get_prompt(registry or {}, spec)
    return PromptInstance(spec.prompt_id, sample.sample_id, _fill(spec, sample.text))


def build_chat_rows(samples: Iterable[GeneratedSample], spec: PromptSpec) -> list[ChatRow]:
    """One chat row per train sample; any test sample aborts with LeakageError."""
    # the question keeps a literal {text} marker; the sample travels in ``text``
    question = _fill(spec, "{text}")
    rows = []
    for s in samples:
        if s.partition is not Partition.TRAIN:
            raise LeakageError(f"sample {s.sample_id} belongs to the {s.partition.value} partition")
        response = spec.format_answer(s.gold_label)
        rows.append(ChatRow(question, s.text, response, spec.prompt_id, s.sample_id, s.gold_label))
    return rows


def build_chat_dataset(
    samples: Sequence[GeneratedSample],
    specs: Sequence[PromptSpec],
    max_rows: int | None = None,
    seed: int = 0,
    rows_per_sample: int | None = None,
) -> list[ChatRow]:
    """Chat rows pairing each sample with prompts, optionally cut to ``max_rows``.

    With ``rows_per_sample`` unset every sample is paired with every prompt;
    otherwise each sample gets that many distinct prompts drawn with ``seed``.
    Truncation keeps a seeded subset in the original row order.
    """
    rng = random.Random(seed)
    if rows_per_sample is None:
        rows = [row for spec in specs for row in build_chat_rows(samples, spec)]
    else:
        if not 1 <= rows_per_sample <= len(specs):
            raise InvalidParameterError(f"rows_per_sample must be in [1, {len(specs)}], got {rows_per_sample}")
        rows = []
        for s in samples:
            for spec in sorted(rng.sample(list(specs), rows_per_sample), key=lambda p: p.prompt_id):
                rows.extend(build_chat_rows([s], spec))
    if max_rows is not None and max_rows < len(rows):
        order = list(range(len(rows)))
        rng.shuffle(order)
        rows = [rows[i] for i in sorted(order[:max_rows])]
    return rows


def export_chat_jsonl(rows: Sequence[ChatRow], path: str | Path) -> int:
    if not rows:
        raise EmptyInputError("no chat rows to export")
    return write_jsonl(path, (r.to_dict() for r in rows))
