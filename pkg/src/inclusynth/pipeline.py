"""Pipeline stages. Each reads upstream artifacts from the output directory,
writes its own outputs and a stage manifest with content hashes."""

from __future__ import annotations

import logging
from collections import defaultdict
from pathlib import Path

from .config import PipelineConfig
from .errors import MissingArtifactError
from .evaluation import (
    Prediction,
    best_prompt,
    label_distribution,
    length_analysis,
    length_histogram,
    position_analysis,
    prompt_accuracy_table,
    score_predictions,
)
from .generator import ExpansionPolicy, GeneratedSample, generate_samples
from .inference import load_endpoints, load_records, run_inference
from .jsonl import file_sha256, read_jsonl, text_sha256, dumps, write_json, write_jsonl
from .labels import Label
from .normalizer import NormalizedResponse, Normalizer, batch_parse_rate
from .plotting import plot_length_accuracy, plot_length_histogram, plot_position_accuracy
from .prompts import attach_exemplars, build_chat_dataset, export_chat_jsonl, get_prompt, load_prompt_dir
from .reporting import (
    write_bucket_csv,
    write_distribution_csv,
    write_histogram_csv,
    write_metrics_csv,
    write_prompt_table_csv,
)
from .templates import Partition, TemplateSentence, TemplateSplit, extract_templates, load_seed_corpus, split_templates
from .vocabulary import VocabularyStore

log = logging.getLogger(__name__)

TEMPLATES = "templates.jsonl"
SPLIT = "split.jsonl"
SAMPLES = "samples.jsonl"
CHAT = "chat.jsonl"
RECORDS = "inference/records.jsonl"
RUN_MANIFEST = "inference/run_manifest.json"
NORMALIZED = "normalized.jsonl"
REPORT = "report"


def _out(cfg: PipelineConfig, rel: str) -> Path:
    return cfg.paths.output_dir / rel


def _require(cfg: PipelineConfig, rel: str, command: str) -> Path:
    path = _out(cfg, rel)
    if not path.exists():
        raise MissingArtifactError(f"{path} not found; run `inclusynth {command}` first")
    return path


def _hashes(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.rglob("*")):
                if f.is_file():
                    out[str(f.name if f.parent == p else f.relative_to(p.parent))] = file_sha256(f)
        elif p.exists():
            out[p.name] = file_sha256(p)
    return out


def _stage_manifest(cfg: PipelineConfig, stage: str, inputs, outputs, params: dict) -> None:
    write_json(
        _out(cfg, f"manifests/{stage}.json"),
        {
            "stage": stage,
            "params": params,
            "params_hash": text_sha256(dumps(params)),
            "inputs": _hashes(inputs),
            "outputs": _hashes(outputs),
        },
    )


def _load_templates(cfg) -> list[TemplateSentence]:
    return [TemplateSentence.from_dict(d) for d in read_jsonl(_require(cfg, TEMPLATES, "extract"))]


def _load_split(cfg) -> TemplateSplit:
    return TemplateSplit.from_rows(read_jsonl(_require(cfg, SPLIT, "split")), cfg.split.ratio, cfg.split.seed)


def _load_samples(cfg) -> list[GeneratedSample]:
    return [GeneratedSample.from_dict(d) for d in read_jsonl(_require(cfg, SAMPLES, "generate"))]


def _prompts(cfg, samples, ids=None):
    registry = load_prompt_dir(cfg.paths.prompt_dir)
    train = [s for s in samples if s.partition is Partition.TRAIN]
    registry = attach_exemplars(registry, train, cfg.generation.seed)
    return [get_prompt(registry, pid) for pid in (ids or registry)]


def cmd_extract(cfg: PipelineConfig) -> Path:
    vocab = VocabularyStore.load(cfg.paths.vocabulary)
    templates = extract_templates(load_seed_corpus(cfg.paths.seed_corpus), vocab)
    out = _out(cfg, TEMPLATES)
    write_jsonl(out, (t.to_dict() for t in templates))
    todo = sum(1 for t in templates if t.placeholders)
    _stage_manifest(
        cfg, "extract", [cfg.paths.seed_corpus, cfg.paths.vocabulary], [out],
        {"templates": len(templates), "todo": todo, "inclusive": len(templates) - todo},
    )
    log.info("extract: %d templates (%d maskable)", len(templates), todo)
    return out


def cmd_split(cfg: PipelineConfig) -> Path:
    templates = _load_templates(cfg)
    split = split_templates(templates, cfg.split.ratio, cfg.split.seed)
    out = _out(cfg, SPLIT)
    write_jsonl(out, split.to_rows())
    _stage_manifest(
        cfg, "split", [_out(cfg, TEMPLATES)], [out],
        {"ratio": cfg.split.ratio, "seed": cfg.split.seed, "train": len(split.train_ids), "test": len(split.test_ids)},
    )
    log.info("split: %d train / %d test templates", len(split.train_ids), len(split.test_ids))
    return out


def cmd_generate(cfg: PipelineConfig) -> Path:
    templates = _load_templates(cfg)
    split = _load_split(cfg)
    vocab = VocabularyStore.load(cfg.paths.vocabulary)
    g = cfg.generation
    samples = generate_samples(templates, split, vocab, g.target_lengths, ExpansionPolicy(g.policy, g.cap, g.seed))
    out = _out(cfg, SAMPLES)
    write_jsonl(out, (s.to_dict() for s in samples))
    counts = defaultdict(int)
    for s in samples:
        counts[f"{s.partition.value}_{s.gold_label.value}"] += 1
    _stage_manifest(
        cfg, "generate", [_out(cfg, TEMPLATES), _out(cfg, SPLIT), cfg.paths.vocabulary], [out],
        {**cfg.section("generation"), "samples": len(samples), **dict(sorted(counts.items()))},
    )
    log.info("generate: %d samples", len(samples))
    return out


def cmd_chat_export(cfg: PipelineConfig) -> Path:
    samples = _load_samples(cfg)
    train = [s for s in samples if s.partition is Partition.TRAIN]
    specs = _prompts(cfg, samples, cfg.chat.prompts)
    rows = build_chat_dataset(train, specs, cfg.chat.max_rows, cfg.chat.seed, cfg.chat.rows_per_sample)
    out = _out(cfg, CHAT)
    n = export_chat_jsonl(rows, out)
    _stage_manifest(
        cfg, "chat_export", [_out(cfg, SAMPLES), cfg.paths.prompt_dir], [out],
        {**cfg.section("chat"), "rows": n, "train_samples": len(train), "prompts": [s.prompt_id for s in specs]},
    )
    log.info("chat-export: %d rows", n)
    return out


def cmd_infer(cfg: PipelineConfig, resume: str | None = None, **overrides) -> Path:
    samples = _load_samples(cfg)
    if cfg.inference.endpoints is None:
        raise MissingArtifactError("inference.endpoints is not configured")
    endpoints = load_endpoints(cfg.inference.endpoints)
    chosen = [s for s in samples if s.partition.value == cfg.inference.partition]
    specs = _prompts(cfg, samples, cfg.inference.prompts)
    inf = cfg.inference
    params = dict(
        parallelism=overrides.get("parallelism") or inf.parallelism,
        max_retries=inf.max_retries if overrides.get("max_retries") is None else overrides["max_retries"],
        timeout_seconds=overrides.get("timeout_seconds") or inf.timeout_seconds,
        backoff_base=inf.backoff_base,
    )
    records, manifest = run_inference(
        chosen, specs, endpoints, _out(cfg, RECORDS), _out(cfg, RUN_MANIFEST),
        resume=resume, seed=cfg.generation.seed, **params,
    )
    log.info("infer: run %s, %s", manifest.run_id, manifest.totals)
    return _out(cfg, RECORDS)


def cmd_normalize(cfg: PipelineConfig) -> Path:
    records = load_records(_require(cfg, RECORDS, "infer"))
    normalizer = Normalizer.from_file(cfg.paths.normalizer_rules)
    rows = []
    for r in records:
        key = {"model_id": r.model_id, "prompt_id": r.prompt_id, "sample_id": r.sample_id, "status": r.status}
        if r.status == "ok":
            rows.append(normalizer.normalize(r.raw_response, key).to_dict())
        else:
            rows.append(NormalizedResponse(Label.UNDETERMINED, None, None, key).to_dict())
    out = _out(cfg, NORMALIZED)
    write_jsonl(out, rows)
    ok = [NormalizedResponse.from_dict(r) for r in rows if r["status"] == "ok"]
    rate = batch_parse_rate(ok) if ok else 0.0
    _stage_manifest(cfg, "normalize", [_out(cfg, RECORDS)], [out], {"responses": len(ok), "parse_rate": rate})
    log.info("normalize: parse rate %.4f over %d responses", rate, len(ok))
    return out


def cmd_evaluate(cfg: PipelineConfig) -> Path:
    normalized = read_jsonl(_require(cfg, NORMALIZED, "normalize"))
    samples = {s.sample_id: s for s in _load_samples(cfg)}
    report = _out(cfg, REPORT)
    report.mkdir(parents=True, exist_ok=True)

    scored = [r for r in normalized if r["status"] == "ok"]
    failed = len(normalized) - len(scored)
    preds = [Prediction(r["model_id"], r["prompt_id"], r["sample_id"], Label(r["label"])) for r in scored]

    reports = score_predictions(samples, preds)
    write_metrics_csv(reports, report / "metrics.csv")
    table = prompt_accuracy_table(reports)
    write_prompt_table_csv(table, report / "prompt_accuracy.csv")

    by_model = defaultdict(list)
    for r in reports:
        by_model[r.model_id].append(r)
    best = {m: best_prompt(rs) for m, rs in by_model.items()}
    write_metrics_csv([r for r in reports if best[r.model_id] == r.prompt_id], report / "best_prompt_metrics.csv")

    bw = cfg.evaluation.bin_width
    length_rows = length_analysis(samples, preds, bw)
    write_bucket_csv(length_rows, report / "length_accuracy.csv")
    plot_length_accuracy(length_rows, report / "length_accuracy.svg")

    position_rows, excluded = position_analysis(samples, preds)
    write_bucket_csv(position_rows, report / "position_accuracy.csv")
    plot_position_accuracy(position_rows, report / "position_accuracy.svg")

    evaluated_ids = {p.sample_id for p in preds}
    hist = length_histogram(
        [samples[i] for i in sorted(evaluated_ids)], bw, max(cfg.generation.target_lengths)
    )
    write_histogram_csv(hist, report / "length_histogram.csv")
    plot_length_histogram(hist, report / "length_histogram.svg")

    dists = {}
    for model in by_model:
        dists[model] = label_distribution(Label(r["label"]) for r in scored if r["model_id"] == model)
    write_distribution_csv(dists, report / "label_distribution.csv")

    parse_rate = batch_parse_rate(NormalizedResponse(Label(r["label"])) for r in scored) if scored else 0.0
    summary = {
        "scored_predictions": len(preds),
        "failed_records": failed,
        "parse_rate": parse_rate,
        "best_prompt": best,
        "position_excluded": excluded,
        "bin_width": bw,
        "warnings": {m: d.warning for m, d in dists.items() if d.warning},
    }
    write_json(report / "summary.json", summary)
    _stage_manifest(cfg, "evaluate", [_out(cfg, NORMALIZED), _out(cfg, SAMPLES)], [report], {"bin_width": bw})
    log.info("evaluate: report written to %s", report)
    return report


def cmd_run_all(cfg: PipelineConfig) -> Path:
    cmd_extract(cfg)
    cmd_split(cfg)
    cmd_generate(cfg)
    cmd_chat_export(cfg)
    cmd_infer(cfg)
    cmd_normalize(cfg)
    return cmd_evaluate(cfg)
