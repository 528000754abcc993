"""Offline stand-ins for model backends."""

from __future__ import annotations

import asyncio
import random
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

from ..errors import BackendError, InvalidParameterError
from ..labels import ANSWER_TEXT, Label, other
from ..prompts import PromptInstance
from .endpoints import ModelEndpoint

# Response shapes seen from chat models: bare labels, "Label:" lines,
# reasoning preambles, markdown and stray symbols.
NOISE_TEMPLATES = (
    "{label}",
    "Label: {label}",
    "**{label}**",
    "ANALISI: il testo contiene il termine '{word}'. Valutazione del genere completata.\nLabel: {label}",
    "Risposta: {label}.",
    "{label}\n\nSpiegazione: la classificazione dipende dal termine \"{word}\".",
    "### Risposta\n- {label}",
    "`{label}` ✅",
    "La classificazione corretta è: {label}",
    "{label}!!!",
    "1. Parole chiave: {word}\n2. Verifica della forma grammaticale\n\n**Label:** {label}",
)

KINDS = ("oracle", "noisy-oracle", "constant", "adversarial-flip")

_GOLDEN = (5 ** 0.5 - 1) / 2


@dataclass(frozen=True)
class MockPolicy:
    kind: str = "oracle"
    p: float = 0.0
    seed: int = 0
    label: Label = Label.INCLUSIVE  # only used by "constant"
    # flip on a golden-ratio sequence over sample order instead of i.i.d. draws;
    # every contiguous run of samples then sees close to exactly p flips
    stratified: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown mock behaviour {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidParameterError("flip probability must be in [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping) -> "MockPolicy":
        return cls(
            kind=str(d.get("policy", d.get("kind", "oracle"))),
            p=float(d.get("p", 0.0)),
            seed=int(d.get("seed", 0)),
            label=Label(d.get("label", "INCLUSIVE")),
            stratified=bool(d.get("stratified", False)),
        )


def _flip_draw(instance: PromptInstance, policy: MockPolicy, ordinal: int | None) -> float:
    if policy.stratified:
        if ordinal is None:
            raise InvalidParameterError("stratified flips need the sample's ordinal")
        offset = random.Random(f"{policy.seed}:{instance.prompt_id}").random()
        return (offset + _GOLDEN * ordinal) % 1.0
    return random.Random(f"{policy.seed}:{instance.prompt_id}:{instance.sample_id}").random()


def mock_respond(
    instance: PromptInstance,
    policy: MockPolicy,
    gold_label: Label,
    target_word: str = "",
    ordinal: int | None = None,
) -> str:
    """Deterministic response for ``instance`` under ``policy``."""
    if policy.kind == "constant":
        return ANSWER_TEXT[policy.label]
    label = gold_label
    if policy.kind == "adversarial-flip" and _flip_draw(instance, policy, ordinal) < policy.p:
        label = other(gold_label)
    if policy.kind == "noisy-oracle":
        rng = random.Random(f"{policy.seed}:{instance.prompt_id}:{instance.sample_id}")
        template = rng.choice(NOISE_TEMPLATES)
        return template.format(label=ANSWER_TEXT[label], word=target_word or "annuncio")
    return ANSWER_TEXT[label]


class MockBackend:
    """Answers from gold labels; optionally injects failures and latency.

    ``fail_first`` makes the first N attempts of every combination raise a
    retryable error. ``calls`` counts successful responses per
    (model, prompt, sample).
    """

    def __init__(
        self,
        policy: MockPolicy,
        gold: Mapping[str, Label],
        words: Mapping[str, str] | None = None,
        order: Mapping[str, int] | None = None,
        fail_first: int = 0,
        delay: float = 0.0,
    ):
        self.policy = policy
        self.gold = gold
        self.words = words or {}
        self.order = order or {}
        self.fail_first = fail_first
        self.delay = delay
        self.calls: Counter = Counter()
        self.attempts: Counter = Counter()
        self.in_flight = 0
        self.max_in_flight = 0

    async def preflight(self, endpoint: ModelEndpoint) -> None:
        return None

    async def complete(self, endpoint: ModelEndpoint, instance: PromptInstance) -> tuple[str, float | None]:
        key = (endpoint.model_id, instance.prompt_id, instance.sample_id)
        self.in_flight += 1
        self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            self.attempts[key] += 1
            await asyncio.sleep(self.delay)
            if self.attempts[key] <= self.fail_first:
                raise BackendError(f"scripted failure {self.attempts[key]} for {key}")
            sid = instance.sample_id
            text = mock_respond(instance, self.policy, self.gold[sid], self.words.get(sid, ""), self.order.get(sid))
            self.calls[key] += 1
            return text, 0.0
        finally:
            self.in_flight -= 1

    async def aclose(self) -> None:
        return None
