"""CSV tables and figures that make up the evaluation report bundle."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

from .evaluation import BucketedAccuracy, LabelDistribution, MetricsReport, PromptAccuracyTable

TABLE2_COLUMNS = ["Model", "Recall", "Specificity", "Accuracy", "bACC", "Precision", "F1-score"]


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _write(path: str | Path, rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    return path


def write_metrics_csv(reports: Sequence[MetricsReport], path: str | Path) -> Path:
    header = TABLE2_COLUMNS + ["model_id", "prompt_id", "support_inclusive", "support_noninclusive", "tp", "fn", "fp", "tn", "degenerate"]
    rows = [header]
    for r in reports:
        cm = r.confusion
        rows.append(
            [
                f"{r.model_id}_{r.prompt_id}",
                _fmt(r.recall),
                _fmt(r.specificity),
                _fmt(r.accuracy),
                _fmt(r.balanced_accuracy),
                _fmt(r.precision),
                _fmt(r.f1),
                r.model_id,
                r.prompt_id,
                r.support.get("INCLUSIVE", 0),
                r.support.get("NONINCLUSIVE", 0),
                *((cm.tp, cm.fn, cm.fp, cm.tn) if cm else ("", "", "", "")),
                ";".join(r.degenerate),
            ]
        )
    return _write(path, rows)


def write_prompt_table_csv(table: PromptAccuracyTable, path: str | Path) -> Path:
    rows = table.rows()
    return _write(path, [rows[0]] + [[r[0], *(_fmt(v) for v in r[1:])] for r in rows[1:]])


def write_bucket_csv(rows: Sequence[BucketedAccuracy], path: str | Path) -> Path:
    out = [["dimension", "bucket", "bucket_start", "model_id", "accuracy", "n"]]
    out += [[r.dimension, r.bucket, r.bucket_start, r.model_id, _fmt(r.accuracy), r.n] for r in rows]
    return _write(path, out)


def write_histogram_csv(bins: Sequence[tuple[int, int, int]], path: str | Path) -> Path:
    return _write(path, [["bin_start", "bin_end", "count"], *bins])


def write_distribution_csv(dists: dict[str, LabelDistribution], path: str | Path) -> Path:
    out = [["model_id", "label", "count", "ratio"]]
    for model, d in dists.items():
        for label, count in d.counts.items():
            out.append([model, label, count, _fmt(d.ratios[label])])
    return _write(path, out)
