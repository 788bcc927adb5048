"""Report figures rendered with matplotlib (Agg) into <out>/figures/.

These accompany the delimited outputs for human review; the golden-file
specification-curve SVG lives in speccurve.py and stays matplotlib-free.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 120


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def score_range_histogram(path: Path, score_ranges, abstain_range: float) -> None:
    ranges = np.asarray(list(score_ranges), dtype=float)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.hist(ranges, bins=30, color="#4878a8", edgecolor="white")
    ax.axvline(abstain_range, color="#c62828", linestyle="--",
               label=f"abstain threshold {abstain_range:g}")
    ax.set_xlabel("per-subject score range across admissible paths")
    ax.set_ylabel("subjects")
    ax.set_title("Predictive inconsistency: score ranges")
    ax.legend(loc="upper right")
    fig.tight_layout()
    _save(fig, path)


def path_performance_curve(path: Path, aucs, admissible_flags,
                           rashomon_value: float | None = None) -> None:
    aucs = np.asarray(list(aucs), dtype=float)
    flags = np.asarray(list(admissible_flags), dtype=bool)
    order = np.argsort(aucs, kind="stable")
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    xs = np.arange(order.size)
    colors = np.where(flags[order], "#2e7d32", "#b0b0b0")
    ax.scatter(xs, aucs[order], s=9, c=colors)
    if rashomon_value is not None:
        ax.axhline(rashomon_value, color="#c62828", linestyle="--",
                   label=f"admissibility threshold {rashomon_value:g}")
        ax.legend(loc="lower right")
    ax.set_xlabel("paths, sorted by holdout AUC")
    ax.set_ylabel("AUC")
    ax.set_title("Specification curve over paths (green = admissible)")
    fig.tight_layout()
    _save(fig, path)


def abstention_bars(path: Path, n_subjects: int, n_abstain: int, n_ambiguous: int) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    labels = ["scored", "abstain", "ambiguous"]
    values = [n_subjects - n_abstain, n_abstain, n_ambiguous]
    ax.bar(labels, values, color=["#4878a8", "#c62828", "#f9a825"])
    for i, v in enumerate(values):
        ax.text(i, v, str(v), ha="center", va="bottom", fontsize=9)
    ax.set_ylabel("holdout subjects")
    ax.set_title("Abstention and decision ambiguity")
    fig.tight_layout()
    _save(fig, path)


def render_report_figures(out_dir: Path, subjects_rows: list[dict],
                          paths_rows: list[dict], abstain_range: float,
                          rashomon_value: float | None) -> list[Path]:
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []

    ranges = [float(r["score_range"]) for r in subjects_rows]
    p1 = fig_dir / "score_range_hist.png"
    score_range_histogram(p1, ranges, abstain_range)
    written.append(p1)

    ok_rows = [r for r in paths_rows if r["status"] == "ok" and r["auc"]]
    if ok_rows:
        p2 = fig_dir / "path_performance.png"
        path_performance_curve(
            p2,
            [float(r["auc"]) for r in ok_rows],
            [r["rashomon_admissible"] == "true" for r in ok_rows],
            rashomon_value,
        )
        written.append(p2)

    n_abstain = sum(1 for r in subjects_rows if r["abstain"] == "true")
    n_ambiguous = sum(1 for r in subjects_rows if r.get("ambiguous") == "true")
    p3 = fig_dir / "abstention.png"
    abstention_bars(p3, len(subjects_rows), n_abstain, n_ambiguous)
    written.append(p3)
    return written
