"""Matplotlib figures for the report bundle, written as reproducible SVG."""

from __future__ import annotations

from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import BucketedAccuracy  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 4.2),
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.6,
    "lines.markersize": 4,
    # fixed salt + no date: identical inputs give byte-identical SVG
    "svg.hashsalt": "inclusynth",
    "svg.fonttype": "path",
}


@contextmanager
def report_style():
    with plt.rc_context(STYLE):
        yield


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_length_histogram(bins: Sequence[tuple[int, int, int]], path: str | Path, title: str = "") -> Path:
    with report_style():
        fig, ax = plt.subplots()
        starts = [b[0] for b in bins]
        width = (bins[0][1] - bins[0][0]) if bins else 1
        ax.bar(starts, [b[2] for b in bins], width=width * 0.9, align="edge", color="#4C72B0")
        ax.set_xlabel("text length (words)")
        ax.set_ylabel("samples")
        ax.set_title(title or "Length distribution")
        return _save(fig, path)


def plot_length_accuracy(rows: Sequence[BucketedAccuracy], path: str | Path, title: str = "") -> Path:
    series = defaultdict(list)
    for r in rows:
        series[r.model_id].append((r.bucket_start, r.accuracy))
    with report_style():
        fig, ax = plt.subplots()
        for model in sorted(series):
            pts = sorted(series[model])
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=model)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("text length bucket start (words)")
        ax.set_ylabel("accuracy")
        ax.set_title(title or "Accuracy by text length")
        if series:
            ax.legend(loc="lower left")
        return _save(fig, path)


def plot_position_accuracy(rows: Sequence[BucketedAccuracy], path: str | Path, title: str = "") -> Path:
    positions = ["start", "middle", "end"]
    models = sorted({r.model_id for r in rows})
    acc = {(r.model_id, r.bucket): r.accuracy for r in rows}
    with report_style():
        fig, ax = plt.subplots()
        width = 0.8 / max(len(models), 1)
        for i, model in enumerate(models):
            xs = [k + i * width for k in range(len(positions))]
            ax.bar(xs, [acc.get((model, p), 0.0) for p in positions], width=width, label=model)
        ax.set_xticks([k + 0.4 - width / 2 for k in range(len(positions))])
        ax.set_xticklabels(positions)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("accuracy")
        ax.set_title(title or "Accuracy by target position")
        if models:
            ax.legend(loc="lower left")
        return _save(fig, path)
