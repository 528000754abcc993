"""Extract binary labels from free-text model responses.

Rules come from an ordered YAML file (see ``data/normalizer_rules.yaml``).
Lookup order: the whole response as a bare label, then ``Label:`` lines
(last one wins), then the free text. Within a scope non-inclusive variants
are matched and masked before inclusive ones, so ``"NON INCLUSIVO"`` can
never be read as inclusive. Free text naming both classes is UNDETERMINED.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .errors import ConfigError, EmptyInputError
from .labels import Label


@dataclass(frozen=True)
class Rule:
    id: str
    scope: str
    label: Label
    priority: int
    pattern: re.Pattern


@dataclass(frozen=True)
class NormalizedResponse:
    label: Label
    matched_pattern: str | None = None
    evidence_span: tuple[int, int] | None = None
    key: dict | None = None

    def to_dict(self) -> dict:
        d = dict(self.key or {})
        d.update(
            label=self.label.value,
            matched_pattern=self.matched_pattern,
            evidence_span=list(self.evidence_span) if self.evidence_span else None,
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizedResponse":
        key = {k: v for k, v in d.items() if k not in ("label", "matched_pattern", "evidence_span")}
        span = d.get("evidence_span")
        return cls(Label(d["label"]), d.get("matched_pattern"), tuple(span) if span else None, key or None)


UNDETERMINED = NormalizedResponse(Label.UNDETERMINED)


class Normalizer:
    def __init__(self, rules: Sequence[Rule], label_line: re.Pattern, strip_chars: str):
        self.rules = sorted(rules, key=lambda r: -r.priority)
        self.label_line = label_line
        self.strip_chars = strip_chars

    @classmethod
    def from_file(cls, path: str | Path | None = None) -> "Normalizer":
        if path is None:
            text = resources.files("inclusynth").joinpath("data/normalizer_rules.yaml").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        # every scalar stays a string, so ids such as "no" are not read as booleans
        spec = yaml.load(text, Loader=yaml.BaseLoader)
        try:
            rules = [
                Rule(r["id"], r["scope"], Label(r["label"]), int(r["priority"]), re.compile(r["pattern"]))
                for r in spec["rules"]
            ]
            label_line = re.compile(spec["label_line"])
        except (KeyError, ValueError, re.error) as exc:
            raise ConfigError(f"invalid normalizer rule file {path or '<default>'}: {exc}") from exc
        return cls(rules, label_line, spec.get("strip_chars", " \t\r\n"))

    def _scan(self, text: str, base: int) -> tuple[Label | None, str | None, tuple[int, int] | None]:
        """Apply free-scope rules with masking; None label means nothing or a conflict."""
        work = text
        hits: dict[Label, tuple[str, tuple[int, int]]] = {}
        for rule in self.rules:
            if rule.scope != "free":
                continue
            for m in rule.pattern.finditer(work):
                hits.setdefault(rule.label, (rule.id, (base + m.start(), base + m.end())))
                work = work[: m.start()] + " " * (m.end() - m.start()) + work[m.end() :]
        if len(hits) == 1:
            label, (rule_id, span) = next(iter(hits.items()))
            return label, rule_id, span
        if len(hits) > 1:
            return None, "conflict", None
        return None, None, None

    def normalize(self, raw: str | None, key: dict | None = None) -> NormalizedResponse:
        raw = raw or ""
        core = raw.strip(self.strip_chars)
        if core:
            start = raw.find(core)
            for rule in self.rules:
                if rule.scope == "bare" and rule.pattern.fullmatch(core):
                    return NormalizedResponse(rule.label, rule.id, (start, start + len(core)), key)

        for m in reversed(list(self.label_line.finditer(raw))):
            label, rule_id, span = self._scan(m.group("body"), m.start("body"))
            if label is not None:
                return NormalizedResponse(label, f"label-line:{rule_id}", span, key)

        label, rule_id, span = self._scan(raw, 0)
        if label is not None:
            return NormalizedResponse(label, rule_id, span, key)
        return NormalizedResponse(Label.UNDETERMINED, rule_id, None, key)


@lru_cache(maxsize=1)
def default_normalizer() -> Normalizer:
    return Normalizer.from_file()


def normalize(raw: str | None, normalizer: Normalizer | None = None) -> NormalizedResponse:
    return (normalizer or default_normalizer()).normalize(raw)


def batch_parse_rate(responses: Iterable[NormalizedResponse]) -> float:
    responses = list(responses)
    if not responses:
        raise EmptyInputError("parse rate of an empty batch is undefined")
    parsed = sum(1 for r in responses if r.label is not Label.UNDETERMINED)
    return parsed / len(responses)
