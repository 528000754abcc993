"""Classification metrics and comparative analyses over scored predictions.

The positive class is INCLUSIVE. An UNDETERMINED prediction always counts as
wrong: a false negative on inclusive gold, a false positive otherwise.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

from .errors import ConflictError, EmptyInputError, InvalidParameterError
from .generator import GeneratedSample, Position
from .labels import Label

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise InvalidParameterError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fn + other.fn, self.fp + other.fp, self.tn + other.tn)


@dataclass(frozen=True)
class MetricsReport:
    model_id: str
    prompt_id: str
    recall: float
    specificity: float
    accuracy: float
    balanced_accuracy: float
    precision: float
    f1: float
    support: dict = field(default_factory=dict)
    degenerate: tuple[str, ...] = ()
    confusion: ConfusionMatrix | None = None


def confusion(pairs: Iterable[tuple[Label, Label]]) -> ConfusionMatrix:
    counts = Counter()
    for gold, pred in pairs:
        gold, pred = Label(gold), Label(pred)
        if gold is Label.UNDETERMINED:
            raise InvalidParameterError("gold labels must be INCLUSIVE or NONINCLUSIVE")
        positive = gold is Label.INCLUSIVE
        correct = pred is gold
        counts[("tp" if correct else "fn") if positive else ("tn" if correct else "fp")] += 1
    if not counts:
        raise EmptyInputError("no (gold, prediction) pairs to score")
    return ConfusionMatrix(counts["tp"], counts["fn"], counts["fp"], counts["tn"])


def _ratio(num: float, den: float, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix, model_id: str = "", prompt_id: str = "") -> MetricsReport:
    """Six metrics from a confusion matrix; any 0/0 is reported as 0 and flagged."""
    if cm.total == 0:
        raise EmptyInputError("empty confusion matrix")
    flags: list[str] = []
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    specificity = _ratio(cm.tn, cm.tn + cm.fp, "specificity", flags)
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", flags)
    return MetricsReport(
        model_id=model_id,
        prompt_id=prompt_id,
        recall=recall,
        specificity=specificity,
        accuracy=(cm.tp + cm.tn) / cm.total,
        balanced_accuracy=(recall + specificity) / 2,
        precision=precision,
        f1=f1,
        support={Label.INCLUSIVE.value: cm.tp + cm.fn, Label.NONINCLUSIVE.value: cm.fp + cm.tn},
        degenerate=tuple(flags),
        confusion=cm,
    )


class Prediction(NamedTuple):
    model_id: str
    prompt_id: str
    sample_id: str
    label: Label


def score_predictions(
    samples: Mapping[str, GeneratedSample], predictions: Iterable[Prediction]
) -> list[MetricsReport]:
    """One report per (model, prompt), in first-seen order."""
    groups: dict[tuple[str, str], list] = defaultdict(list)
    for p in predictions:
        groups[(p.model_id, p.prompt_id)].append((samples[p.sample_id].gold_label, p.label))
    return [metrics(confusion(pairs), m, pr) for (m, pr), pairs in groups.items()]


@dataclass
class PromptAccuracyTable:
    models: list[str]
    prompts: list[str]
    cells: dict[tuple[str, str], float]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.models), len(self.prompts)

    def get(self, model: str, prompt: str) -> float | None:
        return self.cells.get((model, prompt))

    def rows(self) -> list[list]:
        out = [["model", *self.prompts]]
        for m in self.models:
            out.append([m, *(self.cells.get((m, p)) for p in self.prompts)])
        return out


def prompt_accuracy_table(reports: Iterable[MetricsReport]) -> PromptAccuracyTable:
    models: list[str] = []
    prompts: set[str] = set()
    cells: dict[tuple[str, str], float] = {}
    for r in reports:
        key = (r.model_id, r.prompt_id)
        if key in cells:
            raise ConflictError(f"duplicate report for model {r.model_id!r}, prompt {r.prompt_id!r}")
        cells[key] = r.accuracy
        if r.model_id not in models:
            models.append(r.model_id)
        prompts.add(r.prompt_id)
    return PromptAccuracyTable(models, sorted(prompts), cells)


def best_prompt(reports: Iterable[MetricsReport] | Mapping[str, float]) -> str:
    """Highest-accuracy prompt; ties go to the lexicographically smallest id."""
    if isinstance(reports, Mapping):
        scores = dict(reports)
    else:
        scores = {r.prompt_id: r.accuracy for r in reports}
    if not scores:
        raise EmptyInputError("no prompt reports to choose from")
    return min(scores, key=lambda pid: (-scores[pid], pid))


@dataclass(frozen=True)
class LabelDistribution:
    counts: dict[str, int]
    ratios: dict[str, float]
    inclusive_to_noninclusive: float | None
    warning: str | None = None


def label_distribution(labels: Iterable) -> LabelDistribution:
    """Count predicted labels; accepts Labels or objects with a ``label`` attribute."""
    counts = Counter({l.value: 0 for l in Label})
    n = 0
    for item in labels:
        counts[Label(getattr(item, "label", item)).value] += 1
        n += 1
    if n == 0:
        raise EmptyInputError("no responses to count")
    warning = None
    if counts[Label.UNDETERMINED.value] == n:
        warning = "every response is UNDETERMINED"
        log.warning(warning)
    inc, non = counts[Label.INCLUSIVE.value], counts[Label.NONINCLUSIVE.value]
    return LabelDistribution(
        counts=dict(counts),
        ratios={k: v / n for k, v in counts.items()},
        inclusive_to_noninclusive=inc / non if non else None,
        warning=warning,
    )


@dataclass(frozen=True)
class BucketedAccuracy:
    dimension: str  # "length" | "position"
    bucket: str
    model_id: str
    accuracy: float
    n: int
    bucket_start: int = 0


def _bucket_rows(dimension, keyed: Iterable[tuple[object, str, bool]], order, label) -> list[BucketedAccuracy]:
    tally: dict[tuple[object, str], list[int]] = defaultdict(lambda: [0, 0])
    for key, model, correct in keyed:
        t = tally[(key, model)]
        t[0] += int(correct)
        t[1] += 1
    rows = []
    for (key, model), (good, n) in sorted(tally.items(), key=lambda kv: (order(kv[0][0]), kv[0][1])):
        rows.append(BucketedAccuracy(dimension, label(key), model, good / n, n, order(key)))
    return rows


def length_analysis(
    samples: Mapping[str, GeneratedSample], predictions: Iterable[Prediction], bin_width: int = 10
) -> list[BucketedAccuracy]:
    """Per-model accuracy in word-count bins ``[0,w), [w,2w), ...``; empty bins are omitted."""
    if bin_width < 1:
        raise InvalidParameterError("bin_width must be >= 1")

    def keyed():
        for p in predictions:
            s = samples[p.sample_id]
            yield (s.word_count // bin_width) * bin_width, p.model_id, p.label is s.gold_label

    return _bucket_rows("length", keyed(), lambda k: k, lambda k: f"[{k},{k + bin_width})")


_POSITIONS = (Position.START, Position.MIDDLE, Position.END)


def position_analysis(
    samples: Mapping[str, GeneratedSample], predictions: Iterable[Prediction]
) -> tuple[list[BucketedAccuracy], int]:
    """Per-model accuracy by target position; returns rows and the number of excluded predictions."""
    excluded = 0
    kept = []
    for p in predictions:
        s = samples[p.sample_id]
        if s.target_position is Position.NONE:
            excluded += 1
            continue
        kept.append((s.target_position, p.model_id, p.label is s.gold_label))
    rows = _bucket_rows("position", kept, _POSITIONS.index, lambda k: k.value)
    return rows, excluded


def length_histogram(
    samples: Iterable[GeneratedSample], bin_width: int = 10, max_length: int = 0
) -> list[tuple[int, int, int]]:
    """(bin_start, bin_end, count) for every bin up to ``max_length`` or the longest sample."""
    if bin_width < 1:
        raise InvalidParameterError("bin_width must be >= 1")
    counts = Counter(s.word_count // bin_width for s in samples)
    top = max([max_length // bin_width, *counts]) if counts else max_length // bin_width
    return [(k * bin_width, (k + 1) * bin_width, counts.get(k, 0)) for k in range(top + 1)]
