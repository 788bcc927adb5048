"""Specification-curve emission for one holdout subject.

CSV: one row per completed path (path id, the choice per dimension, score,
admissibility, per-path AUC). SVG: a fixed 900x600 hand-emitted template —
top panel shows the subject's sorted scores over risk-bin color bands with a
horizontal line at the baseline path's score; the bottom panel is the aligned
dot matrix marking which option each path used. No charting library is
involved so golden-file comparisons stay stable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from riskforks import __version__
from riskforks.artifacts import path_hex
from riskforks.inconsistency import BinningScheme

SORT_MODES = ("score_asc", "path_canonical")

WIDTH, HEIGHT = 900, 600
TOP = {"x0": 170.0, "x1": 880.0, "y0": 40.0, "y1": 300.0}
BOTTOM = {"x0": 170.0, "x1": 880.0, "y0": 330.0, "y1": 580.0}


@dataclass(frozen=True)
class CurveRow:
    path_id: int
    choices: dict
    score: float
    admissible: bool
    auc: float | None


def curve_rows(rows: list[CurveRow], sort: str) -> list[CurveRow]:
    if sort not in SORT_MODES:
        raise ValueError(f"sort must be one of {SORT_MODES}, got {sort!r}")
    if sort == "path_canonical":
        return list(rows)
    return sorted(rows, key=lambda r: (r.score, path_hex(r.path_id)))


def emit_curve_csv(path: Path, rows: list[CurveRow], dimension_names, sort: str) -> None:
    ordered = curve_rows(rows, sort)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", *dimension_names, "score", "admissible", "auc"])
        for r in ordered:
            w.writerow([
                path_hex(r.path_id),
                *[r.choices.get(d, "") for d in dimension_names],
                repr(r.score),
                "true" if r.admissible else "false",
                "" if r.auc is None else repr(r.auc),
            ])


def _band_color(index: int, n_bins: int) -> str:
    """Green-to-red gradient for ordinal risk bins."""
    t = index / max(n_bins - 1, 1)
    r = int(46 + t * (198 - 46))
    g = int(125 - t * (125 - 40))
    b = int(50 - t * (50 - 40))
    return f"#{r:02x}{g:02x}{b:02x}"


def _f(v: float) -> str:
    return f"{v:.2f}"


def emit_curve_svg(
    path: Path,
    rows: list[CurveRow],
    dimensions,  # sequence of (dimension name, tuple of option names)
    scheme: BinningScheme,
    subject_id: str,
    sort: str,
    baseline_path_id: int | None = None,
) -> None:
    ordered = curve_rows(rows, sort)
    n = len(ordered)
    parts: list[str] = []
    parts.append('<?xml version="1.0" encoding="UTF-8"?>')
    parts.append(f"<!-- riskforks {__version__} -->")
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    parts.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    parts.append(
        f'<text x="{_f(TOP["x0"])}" y="22" font-family="sans-serif" font-size="14">'
        f"Specification curve: subject {_esc(subject_id)} ({n} paths, sort={sort})</text>"
    )

    def sy(score: float) -> float:
        return TOP["y1"] - score * (TOP["y1"] - TOP["y0"])

    def sx(j: int) -> float:
        if n == 1:
            return 0.5 * (TOP["x0"] + TOP["x1"])
        return TOP["x0"] + j * (TOP["x1"] - TOP["x0"]) / (n - 1)

    # risk-bin bands
    edges = [0.0, *scheme.cuts, 1.0]
    for b in range(scheme.n_bins):
        y_top, y_bot = sy(edges[b + 1]), sy(edges[b])
        parts.append(
            f'<rect x="{_f(TOP["x0"])}" y="{_f(y_top)}" '
            f'width="{_f(TOP["x1"] - TOP["x0"])}" height="{_f(y_bot - y_top)}" '
            f'fill="{_band_color(b, scheme.n_bins)}" fill-opacity="0.15"/>'
        )
        parts.append(
            f'<text x="{_f(TOP["x1"] + 4)}" y="{_f(0.5 * (y_top + y_bot) + 3)}" '
            f'font-family="sans-serif" font-size="9" fill="#555">{_esc(scheme.labels[b])}</text>'
        )
    # axis ticks
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        parts.append(
            f'<line x1="{_f(TOP["x0"] - 4)}" y1="{_f(y)}" x2="{_f(TOP["x0"])}" y2="{_f(y)}" '
            f'stroke="#333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_f(TOP["x0"] - 8)}" y="{_f(y + 3)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{tick:g}</text>'
        )
    parts.append(
        f'<line x1="{_f(TOP["x0"])}" y1="{_f(TOP["y0"])}" x2="{_f(TOP["x0"])}" '
        f'y2="{_f(TOP["y1"])}" stroke="#333" stroke-width="1"/>'
    )
    # baseline score line
    if baseline_path_id is not None:
        base = next((r for r in ordered if r.path_id == baseline_path_id), None)
        if base is not None:
            y = sy(base.score)
            parts.append(
                f'<line x1="{_f(TOP["x0"])}" y1="{_f(y)}" x2="{_f(TOP["x1"])}" y2="{_f(y)}" '
                f'stroke="#1565c0" stroke-width="1" stroke-dasharray="6,3"/>'
            )
            parts.append(
                f'<text x="{_f(TOP["x0"] + 4)}" y="{_f(y - 4)}" font-family="sans-serif" '
                f'font-size="9" fill="#1565c0">baseline {base.score:.3f}</text>'
            )
    # score dots
    for j, r in enumerate(ordered):
        fill = "#111" if r.admissible else "#aaa"
        parts.append(
            f'<circle cx="{_f(sx(j))}" cy="{_f(sy(r.score))}" r="2.20" fill="{fill}"/>'
        )

    # bottom dot matrix
    matrix_rows: list[tuple[str, str]] = []
    for dim_name, option_names in dimensions:
        for opt in option_names:
            matrix_rows.append((dim_name, opt))
    m = len(matrix_rows)
    row_h = (BOTTOM["y1"] - BOTTOM["y0"]) / max(m, 1)
    for k, (dim_name, opt) in enumerate(matrix_rows):
        y = BOTTOM["y0"] + (k + 0.5) * row_h
        if k % 2 == 0:
            parts.append(
                f'<rect x="{_f(BOTTOM["x0"])}" y="{_f(y - row_h / 2)}" '
                f'width="{_f(BOTTOM["x1"] - BOTTOM["x0"])}" height="{_f(row_h)}" '
                f'fill="#000" fill-opacity="0.04"/>'
            )
        parts.append(
            f'<text x="8" y="{_f(y + 3)}" font-family="sans-serif" font-size="9" '
            f'fill="#333">{_esc(dim_name)}: {_esc(opt)}</text>'
        )
        for j, r in enumerate(ordered):
            if r.choices.get(dim_name) == opt:
                parts.append(
                    f'<circle cx="{_f(sx(j))}" cy="{_f(y)}" r="1.80" fill="#333"/>'
                )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def _esc(s: str) -> str:
    return (
        str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )
