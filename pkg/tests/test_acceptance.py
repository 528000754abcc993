"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``RESULTS`` and echoed in the terminal summary by
``conftest.pytest_terminal_summary``, so they appear even without ``-s``.
"""

from __future__ import annotations

import csv
import json
import random
import time
from collections import Counter
from contextlib import contextmanager
from pathlib import Path

import pytest
import yaml

from inclusynth import pipeline
from inclusynth.config import demo_dir, load_config
from inclusynth.errors import LeakageError
from inclusynth.evaluation import ConfusionMatrix, best_prompt, metrics
from inclusynth.generator import ExpansionPolicy, GeneratedSample, derive_gold_label, generate_samples, merge_chunks
from inclusynth.inference import MockBackend, MockPolicy, ModelEndpoint, load_records, run_inference
from inclusynth.labels import Label
from inclusynth.normalizer import batch_parse_rate, normalize
from inclusynth.prompts import attach_exemplars, build_chat_dataset, build_chat_rows, export_chat_jsonl, load_prompt_dir
from inclusynth.templates import Partition, TemplateSentence, annotate_template, extract_templates, load_seed_corpus, split_templates
from inclusynth.vocabulary import VocabularyStore

from conftest import entry, small_vocab_store
from oracles import count_expansions, is_inclusive, read_jsonl, vocabulary_sizes
from reference_tables import (
    PROMPT_ACCURACY_SYNTHETIC,
    PROMPT_COLUMNS,
    SEED_DATA_ROWS,
    SYNTHETIC_ROWS,
    matrix_for_precision_recall,
    matrix_for_recall_specificity,
)

RESULTS: list[str] = []


@contextmanager
def criterion(number: int, title: str, budget_s: float | None = None):
    """Time the block, enforce its runtime budget and record a PASS/FAIL line."""
    start = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget_s is not None:
            assert elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        line = f"criterion {number:2d} FAIL  {title} ({elapsed:.2f}s): {str(exc).splitlines()[0] if str(exc) else type(exc).__name__}"
        RESULTS.append(line)
        print(line)
        raise
    line = f"criterion {number:2d} PASS  {title} ({elapsed:.2f}s)"
    RESULTS.append(line)
    print(line)


def _demo_config(tmp_path: Path, output: str, **generation) -> Path:
    raw = yaml.safe_load((demo_dir() / "config.yaml").read_text(encoding="utf-8"))
    for key in ("seed_corpus", "vocabulary", "prompt_dir"):
        raw["paths"][key] = str(demo_dir() / raw["paths"][key])
    raw["inference"]["endpoints"] = str(demo_dir() / "endpoints.yaml")
    raw["paths"]["output_dir"] = str(tmp_path / output)
    raw["generation"].update(generation)
    path = tmp_path / f"{output}.yaml"
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return path


def _read_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    """The bundled offline demo, run end to end once."""
    tmp = tmp_path_factory.mktemp("demo")
    cfg = load_config(_demo_config(tmp, "out"))
    start = time.perf_counter()
    pipeline.cmd_run_all(cfg)
    return cfg, time.perf_counter() - start


# 1


def test_criterion_01_metric_reproduction():
    with criterion(1, "bACC and F1 reproduce the 14 published rows within 0.0015", 1.0):
        rows = SYNTHETIC_ROWS + SEED_DATA_ROWS
        assert len(rows) == 14
        for name, recall, spec, _acc, bacc, prec, f1 in rows:
            got = metrics(ConfusionMatrix(*matrix_for_recall_specificity(recall, spec))).balanced_accuracy
            assert abs(got - bacc) <= 0.0015, (name, "bACC", got, bacc)
            got = metrics(ConfusionMatrix(*matrix_for_precision_recall(prec, recall))).f1
            assert abs(got - f1) <= 0.0015, (name, "F1", got, f1)


# 2


def test_criterion_02_best_prompt():
    with criterion(2, "best_prompt picks zslcot#0 and fsl#0", 1.0):
        for model, expected in (("phi3_finetuned", "zslcot#0"), ("gpt_40_mini", "fsl#0")):
            scores = dict(zip(PROMPT_COLUMNS, PROMPT_ACCURACY_SYNTHETIC[model]))
            assert best_prompt(scores) == expected, model


# 3


def test_criterion_03_labeling_oracle():
    with criterion(3, "gold labels agree with the gender-tag predicate on an exhaustive demo expansion", 10.0):
        vocab = VocabularyStore.load(demo_dir() / "vocabulary.csv")
        templates = extract_templates(load_seed_corpus(demo_dir() / "seed_corpus.jsonl"), vocab)
        split = split_templates(templates, 0.7, 42)
        samples = generate_samples(templates, split, vocab, [1], ExpansionPolicy("exhaustive"))
        assert len(samples) >= 5000
        mismatches = [
            s.sample_id
            for s in samples
            if (s.gold_label is Label.INCLUSIVE) != is_inclusive(s.to_dict())
            or derive_gold_label(s.substitutions) is not s.gold_label
        ]
        assert mismatches == [], f"{len(mismatches)} of {len(samples)} disagree"


# 4


def _random_corpus(rng: random.Random, vocab_path: Path):
    genders = ["neutral", "masculine", "feminine"]
    entries = [
        entry(f"{cat.lower()}{k}", cat, rng.choice(genders))
        for cat in ("JOB", "ADJ", "VERB")
        for k in range(rng.randint(2, 6))
    ]
    with open(vocab_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, ["surface", "category", "gender", "orthography"])
        w.writeheader()
        w.writerows(e.to_dict() for e in entries)
    vocab = VocabularyStore.load(vocab_path)
    cats = ["JOB", "ADJ", "VERB"]
    sentences = [
        [rng.choice(["testo", "ruolo", "sede", "Milano"]) for _ in range(rng.randint(1, 10))]
        for _ in range(rng.randint(1, 12))
    ]
    # 2 to 8 slots per corpus bound a single chunk by 6**8 combinations
    for _ in range(rng.randint(2, 8)):
        words = rng.choice(sentences)
        words[rng.randrange(len(words))] = f"{rng.choice(cats).lower()}0"
    templates = [
        annotate_template(" ".join(words) + ".", vocab, f"d{i // 4}-s{i:03d}", f"d{i // 4}")
        for i, words in enumerate(sentences)
    ]
    return vocab, templates


def test_criterion_04_expansion_counting(tmp_path):
    with criterion(4, "exhaustive counts equal the analytic product on 100 random configurations", 30.0):
        rng = random.Random(404)
        for trial in range(100):
            vocab_path = tmp_path / f"vocab{trial}.csv"
            vocab, templates = _random_corpus(rng, vocab_path)
            split = split_templates(templates, rng.uniform(0.3, 0.9), trial)
            targets = [rng.randint(1, 30)]
            samples = generate_samples(templates, split, vocab, targets, ExpansionPolicy("exhaustive"))
            # placeholders of each chunk, read from the raw templates behind it
            slots = {t.template_id: [p.category.value for p in t.placeholders] for t in templates}
            per_chunk = Counter(s.chunk_id for s in samples)
            chunks = [
                c
                for part in (Partition.TRAIN, Partition.TEST)
                for c in merge_chunks([t for t in templates if split.partition_of(t.template_id) is part], targets[0], part)
            ]
            placeholders = [[cat for m in c.member_templates for cat in slots[m]] for c in chunks]
            expected = count_expansions(placeholders, vocabulary_sizes(vocab_path))
            assert len(samples) == expected, (trial, len(samples), expected)
            assert sum(per_chunk.values()) == expected


# 5


def test_criterion_05_split_and_leakage():
    with criterion(5, "200 random corpora split 70/30, disjoint, deterministic, no test rows in chat export", 10.0):
        rng = random.Random(505)
        vocab = small_vocab_store()
        surfaces = ["insegnante", "infermiere", "motivato", "contattato/a", "espert*"]
        for trial in range(200):
            n = rng.randint(2, 120)
            templates = [
                annotate_template(f"Cerchiamo {rng.choice(surfaces)} numero {i} {trial}.", vocab, f"c{trial}-s{i:04d}", f"c{trial}")
                for i in range(n)
            ]
            seed = rng.randrange(2**31)
            split = split_templates(templates, 0.7, seed)
            assert split.train_ids.isdisjoint(split.test_ids)
            assert split.train_ids | split.test_ids == {t.template_id for t in templates}
            assert abs(len(split.train_ids) - 0.7 * n) <= 1 and abs(len(split.test_ids) - 0.3 * n) <= 1
            assert split_templates(templates, 0.7, seed) == split
            if not split.test_ids or not split.train_ids:
                continue
            samples = generate_samples(templates, split, vocab, [rng.randint(1, 20)], ExpansionPolicy("capped", 3, seed))
            train = [s for s in samples if s.partition is Partition.TRAIN]
            test = [s for s in samples if s.partition is Partition.TEST]
            assert {t for s in train for t in s.template_ids}.isdisjoint(split.test_ids)
            assert len(build_chat_rows(train, _ZSL)) == len(train)
            for s in rng.sample(test, min(3, len(test))):
                with pytest.raises(LeakageError):
                    build_chat_rows(train + [s], _ZSL)


def _zsl():
    from inclusynth.prompts import PromptSpec, Strategy

    return PromptSpec("zsl#0", Strategy.ZSL, "Classifica: {text}")


_ZSL = _zsl()


# 6

INC_FORMS = ["INCLUSIVO", "Inclusivo", "inclusivo", "INCLUSIVA", "inclusiva", "INCLUSIVE", "Inclusive", "inclusive"]
NON_FORMS = [
    "NON INCLUSIVO", "NON-INCLUSIVO", "NON_INCLUSIVO", "NONINCLUSIVO", "Non Inclusivo", "non inclusivo", "Non-inclusivo",
    "non inclusiva", "NON INCLUSIVA", "NON INCLUSIVE", "NON-INCLUSIVE", "NONINCLUSIVE", "NOT INCLUSIVE", "not inclusive",
]
DECORATIONS = ["{}", "**{}**", "*{}*", "`{}`", '"{}"', "'{}'", "«{}»", "{}.", "{}!", "{} ✅", "✔️ {}", "[{}]", "({})", "__{}__", "{} 🙂", "  {}  "]
WRAPPERS = [
    "{}",
    "Label: {}",
    "label: {}",
    "LABEL : {}",
    "Label:{}",
    "Etichetta: {}",
    "Risposta: {}",
    "Risposta finale: {}",
    "### Risposta\n{}",
    "## Classificazione\n- {}",
    "> {}",
    "```\n{}\n```",
    "Il testo è {}.",
    "Dopo un'attenta analisi, il testo risulta {}.",
    "ANALISI: il testo descrive il ruolo e i requisiti richiesti.\nLabel: {}",
    "Ragionamento passo per passo:\n1. Individuo i termini riferiti alle persone.\n2. Verifico la forma usata.\nLabel: {}",
    "Classificazione: {}\n\nSpiegazione: la scelta dipende dalle forme usate per il ruolo.",
    "{}\n\nNota: la valutazione riguarda solo il testo fornito.",
]


def test_criterion_06_normalizer_parse_rate():
    with criterion(6, "noisy corpus of 12,000 responses parses at >= 0.999 with no negation misread", 10.0):
        rng = random.Random(606)
        corpus = []
        for _ in range(12_000):
            gold = rng.choice([Label.INCLUSIVE, Label.NONINCLUSIVE])
            form = rng.choice(INC_FORMS if gold is Label.INCLUSIVE else NON_FORMS)
            corpus.append((rng.choice(WRAPPERS).format(rng.choice(DECORATIONS).format(form)), gold))
        parsed = [(normalize(raw), gold) for raw, gold in corpus]
        rate = batch_parse_rate(p for p, _ in parsed)
        misread = [p for p, gold in parsed if gold is Label.NONINCLUSIVE and p.label is Label.INCLUSIVE]
        assert rate >= 0.999, rate
        assert misread == []


# 7


def test_criterion_07_chat_round_trip(demo_run):
    with criterion(7, "every exported demo chat row normalizes back to its gold label"):
        cfg, _ = demo_run
        samples = [GeneratedSample.from_dict(d) for d in read_jsonl(cfg.paths.output_dir / "samples.jsonl")]
        train = [s for s in samples if s.partition is Partition.TRAIN]
        registry = attach_exemplars(load_prompt_dir(cfg.paths.prompt_dir), train, cfg.generation.seed)
        rows = build_chat_dataset(train, list(registry.values()), cfg.chat.max_rows, cfg.chat.seed, cfg.chat.rows_per_sample)
        # the rebuilt rows are exactly the exported file, so their gold labels apply to it
        export_chat_jsonl(rows, cfg.paths.output_dir / "chat.rebuilt.jsonl")
        exported = (cfg.paths.output_dir / "chat.jsonl").read_bytes()
        assert (cfg.paths.output_dir / "chat.rebuilt.jsonl").read_bytes() == exported
        assert len(rows) == len(exported.splitlines()) > 0
        wrong = [r.sample_id for r in rows if normalize(r.response).label is not r.gold_label]
        assert wrong == []


# 8


def test_criterion_08_end_to_end(demo_run):
    with criterion(8, "offline run_all: bundle complete, oracle 1.0, flip(0.3) at 0.70 +- 0.02 per bucket"):
        cfg, elapsed = demo_run
        assert elapsed < 300, elapsed
        out = cfg.paths.output_dir
        report = out / "report"
        for name in (
            "metrics.csv", "prompt_accuracy.csv", "best_prompt_metrics.csv",
            "length_accuracy.csv", "length_accuracy.svg", "position_accuracy.csv", "position_accuracy.svg",
            "length_histogram.csv", "length_histogram.svg", "label_distribution.csv", "summary.json",
        ):
            assert (report / name).stat().st_size > 0, name

        samples = read_jsonl(out / "samples.jsonl")
        n_test = sum(1 for s in samples if s["partition"] == "test")
        assert n_test >= 2000, n_test
        normalized = read_jsonl(out / "normalized.jsonl")
        models = {r["model_id"] for r in normalized}
        prompts = {r["prompt_id"] for r in normalized}
        assert len(models) == 3 and prompts == set(PROMPT_COLUMNS)
        assert len(normalized) == n_test * 4 * 3
        assert len({(r["model_id"], r["prompt_id"], r["sample_id"]) for r in normalized}) == len(normalized)

        table = _read_csv(report / "prompt_accuracy.csv")
        assert len(table) == 3 and set(table[0]) >= set(PROMPT_COLUMNS)
        oracle = next(r for r in table if r[next(iter(table[0]))] == "mock_oracle")
        assert all(float(oracle[p]) == 1.0 for p in PROMPT_COLUMNS)
        for row in _read_csv(report / "metrics.csv"):
            if row["model_id"] == "mock_oracle":
                assert float(row["Accuracy"]) == 1.0 and float(row["bACC"]) == 1.0

        for name in ("length_accuracy.csv", "position_accuracy.csv"):
            rows = _read_csv(report / name)
            oracle_rows = [r for r in rows if r["model_id"] == "mock_oracle"]
            flip_rows = [r for r in rows if r["model_id"] == "mock_flip"]
            assert oracle_rows and flip_rows
            assert all(float(r["accuracy"]) == 1.0 for r in oracle_rows)
            off = [(r["bucket"], r["n"], r["accuracy"]) for r in flip_rows if abs(float(r["accuracy"]) - 0.70) > 0.02]
            assert off == [], f"{name}: {off}"


# 9


def test_criterion_09_chunk_length_control(tmp_path):
    targets = [10, 30, 60, 120, 240]
    with criterion(9, "chunks stay within target + longest member; histogram reaches 240"):
        cfg = load_config(_demo_config(tmp_path, "lengths", target_length=targets, cap=2))
        pipeline.cmd_run_all(cfg)
        out = cfg.paths.output_dir
        templates = [TemplateSentence.from_dict(d) for d in read_jsonl(out / "templates.jsonl")]
        lengths = {t.template_id: len(t.text.split()) for t in templates}
        split = split_templates(templates, cfg.split.ratio, cfg.split.seed)
        seen = set()
        for part in (Partition.TRAIN, Partition.TEST):
            members = [t for t in templates if split.partition_of(t.template_id) is part]
            for target in targets:
                for chunk in merge_chunks(members, target, part):
                    longest = max(lengths[m] for m in chunk.member_templates)
                    assert chunk.word_count <= target + longest, (chunk.chunk_id, chunk.word_count)
                    seen.add(chunk.chunk_id)
        emitted = {s["chunk_id"] for s in read_jsonl(out / "samples.jsonl")}
        assert emitted <= seen and {int(c.split("-L")[1].split("-")[0]) for c in emitted} == set(targets)
        hist = _read_csv(out / "report" / "length_histogram.csv")
        assert int(hist[0]["bin_start"]) == 0
        assert int(hist[-1]["bin_start"]) <= 240 < int(hist[-1]["bin_end"])
        assert all(int(a["bin_end"]) == int(b["bin_start"]) for a, b in zip(hist, hist[1:]))


# 10


class _PowerCut(Exception):
    pass


class _Budget:
    def __init__(self, limit: int):
        self.limit, self.used = limit, 0


class _CuttingBackend(MockBackend):
    """Answers until a budget shared by all endpoints runs out, then fails hard."""

    def __init__(self, *a, budget: _Budget, **kw):
        super().__init__(*a, **kw)
        self.budget = budget

    async def complete(self, endpoint, instance):
        if self.budget.used >= self.budget.limit:
            raise _PowerCut("interrupted")
        self.budget.used += 1
        return await super().complete(endpoint, instance)


def test_criterion_10_resume_idempotence(tmp_path):
    with criterion(10, "resume after a 50% interruption: one record per combination, no duplicate calls"):
        vocab = VocabularyStore.load(demo_dir() / "vocabulary.csv")
        templates = extract_templates(load_seed_corpus(demo_dir() / "seed_corpus.jsonl"), vocab)
        split = split_templates(templates, 0.7, 42)
        samples = [
            s for s in generate_samples(templates, split, vocab, [35], ExpansionPolicy("capped", 3, 7)) if s.partition is Partition.TEST
        ][:150]
        train = [s for s in generate_samples(templates, split, vocab, [35], ExpansionPolicy("capped", 3, 7)) if s.partition is Partition.TRAIN]
        specs = list(attach_exemplars(load_prompt_dir(demo_dir() / "prompts"), train, 7).values())
        endpoints = [ModelEndpoint(m, f"mock://{m}", mock={"policy": "oracle"}) for m in ("mock_a", "mock_b")]
        gold = {s.sample_id: s.gold_label for s in samples}
        combos = len(samples) * len(specs) * len(endpoints)
        records_path = tmp_path / "records.jsonl"

        budget = _Budget(combos // 2)
        first = {e.model_id: _CuttingBackend(MockPolicy("oracle"), gold, budget=budget, delay=0.0005) for e in endpoints}
        with pytest.raises(_PowerCut):
            run_inference(samples, specs, endpoints, records_path, backends=first, parallelism=6, backoff_base=0.0)
        written = load_records(records_path)
        assert abs(len(written) - combos // 2) <= 6 * len(endpoints)
        run_id = json.loads((tmp_path / "run_manifest.json").read_text(encoding="utf-8"))["run_id"]

        second = {e.model_id: MockBackend(MockPolicy("oracle"), gold) for e in endpoints}
        records, manifest = run_inference(
            samples, specs, endpoints, records_path, backends=second, parallelism=6, backoff_base=0.0, resume=run_id
        )
        calls = Counter()
        for b in list(first.values()) + list(second.values()):
            calls.update(b.attempts)
        keys = [r.key for r in records]
        assert len(keys) == combos and len(set(keys)) == combos
        assert len(load_records(records_path)) == combos
        assert set(calls) == set(keys) and max(calls.values()) == 1, "a combination reached a backend twice"
        assert manifest.totals["ok"] == combos
