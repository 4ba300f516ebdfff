"""Delimited and graphical report rendering for evaluation and score runs.

Figures are rendered headless to PNG files next to the CSV/JSON output.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import MetricsReport  # noqa: E402

_CSV_FIELDS = ("id",) + MetricsReport._KEYS


def write_evaluation_csv(path, per_sample: dict, aggregate: dict | None):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        writer.writeheader()
        for sid in sorted(per_sample):
            writer.writerow({"id": sid, **per_sample[sid]})
        if aggregate:
            writer.writerow({"id": "mean", **aggregate})


def evaluation_figure(path, per_sample: dict):
    """Distributions of the headline metrics, tactile vs vision."""
    metrics = ("rmse", "one_minus_ssim", "psnr")
    fig, axes = plt.subplots(2, len(metrics), figsize=(4 * len(metrics), 6))
    for row, mod, label in ((0, "t", "tactile"), (1, "v", "vision")):
        for col, metric in enumerate(metrics):
            ax = axes[row][col]
            vals = [rep[f"{metric}_{mod}"] for rep in per_sample.values()]
            ax.hist(vals, bins=min(30, max(5, len(vals) // 3 + 1)), color="#4878a8")
            ax.set_title(f"{label} {metric}")
            ax.grid(alpha=0.3)
    fig.suptitle("Reconstruction quality per sample")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_scores_csv(path, rows: list):
    fields = ("rank", "name", "score", "ssim_t", "lpips_t", "ssim_v", "lpips_v")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fields})


def score_figure(path, rows: list):
    """Ranked bar chart of candidate scores."""
    names = [r["name"] for r in rows]
    scores = [r["score"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(rows) + 2), 4))
    bars = ax.bar(names, scores, color="#4878a8")
    if bars:
        bars[0].set_color("#b8503c")
    ax.set_ylabel("selection score")
    ax.set_title("Candidate ranking")
    ax.grid(axis="y", alpha=0.3)
    for name, score, bar in zip(names, scores, bars):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(),
                f"{score:.4f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_evaluation_outputs(out_dir, evaluation: dict):
    """JSON sidecars are written by the caller; this adds CSV + figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_evaluation_csv(out / "evaluation.csv", evaluation["per_sample"],
                         evaluation.get("aggregate"))
    if evaluation["per_sample"]:
        evaluation_figure(out / "evaluation_metrics.png", evaluation["per_sample"])


def render_score_outputs(out_dir, rows: list):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_scores_csv(out / "scores.csv", rows)
    if rows:
        score_figure(out / "score_ranking.png", rows)
