"""Figure rendering for split summaries and evaluation reports.

Figures are written as PNG files next to the delimited outputs; nothing here
is needed for the numeric pipeline.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import EvalReport
from .splitter import LABELS, LeakageReport, SplitTargets


def render_split_figures(
    report: LeakageReport, targets: SplitTargets | None, out_dir: str | Path
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hours = [report.duration_ms.get(label, 0) / 3.6e6 for label in LABELS]
    total = sum(hours)

    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(LABELS, hours, color=["#4878d0", "#ee854a", "#6acc64"])
    if targets is not None and total > 0:
        wanted = [targets.fraction(label) * total for label in LABELS]
        ax.plot(LABELS, wanted, "k_", markersize=28, label="target")
        ax.legend()
    for bar, h in zip(bars, hours):
        ax.annotate(f"{h:.2f}h", (bar.get_x() + bar.get_width() / 2, h),
                    ha="center", va="bottom", fontsize=9)
    ax.set_ylabel("duration (hours)")
    ax.set_title("split durations")
    fig.tight_layout()
    path = out_dir / "split_durations.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def render_eval_figures(report: EvalReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(5, 4))
    counts = [report.substitutions, report.insertions, report.deletions]
    ax.bar(["substitutions", "insertions", "deletions"], counts,
           color=["#d65f5f", "#ee854a", "#4878d0"])
    ax.set_ylabel("count")
    ax.set_title(f"word errors (WER {100 * report.wer:.2f}%)")
    fig.tight_layout()
    path = out_dir / "error_breakdown.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    rates = [
        (u.substitutions + u.insertions + u.deletions) / len(u.ref_tokens)
        for u in report.per_utterance
        if u.ref_tokens
    ]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.hist(rates, bins=20, color="#4878d0", edgecolor="white")
    ax.set_xlabel("per-utterance WER")
    ax.set_ylabel("utterances")
    ax.set_title("per-utterance error distribution")
    fig.tight_layout()
    path = out_dir / "utterance_wer_hist.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
