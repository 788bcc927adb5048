"""Out-directory writers and readers for the delimited artifacts.

All CSVs: UTF-8, header row, RFC-4180 quoting, LF newlines, floats via repr
(shortest round-trip form) so outputs are byte-deterministic.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from riskforks.errors import RiskforksError

MATRIX_CSV = "matrix.csv"
PATHS_CSV = "paths.csv"
SUBJECTS_CSV = "subjects.csv"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if value != value:
            return "nan"
        if value == 0.0:
            value = 0.0  # collapse -0.0
        return repr(value)
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def path_hex(path_id: int) -> str:
    return f"{path_id:016x}"


def write_matrix_csv(out_dir: Path, matrix) -> None:
    with open(out_dir / MATRIX_CSV, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", *[path_hex(pid) for pid in matrix.path_ids]])
        for i, sid in enumerate(matrix.subject_ids):
            w.writerow([sid, *[_fmt(float(v)) for v in matrix.scores[i, :]]])


def read_matrix_csv(out_dir: Path):
    """Returns (subject_ids, path_ids, scores array)."""
    path = out_dir / MATRIX_CSV
    if not path.exists():
        raise RiskforksError(f"{path} not found; run the multiverse first")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        path_ids = tuple(int(h, 16) for h in header[1:])
        subject_ids, rows = [], []
        for row in reader:
            subject_ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return tuple(subject_ids), path_ids, np.array(rows, dtype=float)


def paths_csv_columns(dimension_names, budgets, group_names):
    cols = ["path_id", "status", "reason", "seed", *dimension_names,
            "rashomon_admissible", "auc", "brier", "ece"]
    cols += [f"lift@{b:g}" for b in budgets]
    for g in group_names:
        cols += [f"group_{g}_{q}" for q in
                 ("n", "base_rate", "tpr", "fpr", "balance_pos", "balance_neg", "ece")]
    cols += ["gap_base_rate", "gap_tpr", "gap_fpr", "gap_balance_pos",
             "gap_balance_neg", "gap_ece", "roc_cross_vs_baseline",
             "n_selected_columns", "selected_columns", "warnings"]
    return cols


def write_paths_csv(out_dir: Path, result) -> None:
    dims = [d.name for d in result.config.universe.dimensions]
    groups = sorted({s.group for s in result.dataset.subjects})
    cols = paths_csv_columns(dims, result.config.budgets, groups)
    with open(out_dir / PATHS_CSV, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for o in result.outcomes:
            row = [path_hex(o.path_id), o.status, o.reason or "", o.seed]
            row += [o.choices.get(d, "") for d in dims]
            row.append(_fmt(result.rashomon_decisions.get(o.path_id, False)))
            if o.metrics is None:
                row += [""] * (3 + len(result.config.budgets) + 7 * len(groups) + 6)
                row += ["", "0", "", ""]
                w.writerow(row[:len(cols)])
                continue
            m = o.metrics
            row += [_fmt(m.auc), _fmt(m.brier), _fmt(m.ece)]
            row += [_fmt(m.lifts[b]) for b in result.config.budgets]
            for g in groups:
                st = m.fairness.groups.get(g)
                if st is None:
                    row += [""] * 7
                else:
                    row += [st.n, _fmt(st.base_rate), _fmt(st.tpr), _fmt(st.fpr),
                            _fmt(st.mean_score_pos), _fmt(st.mean_score_neg), _fmt(st.ece)]
            gaps = m.fairness.gaps
            row += [_fmt(gaps[q]) for q in
                    ("base_rate", "tpr", "fpr", "mean_score_pos", "mean_score_neg", "ece")]
            flag = result.roc_cross_vs_baseline.get(o.path_id)
            row.append("" if flag is None else _fmt(flag))
            row.append(len(o.selected_columns))
            row.append(";".join(o.selected_columns))
            row.append(";".join(o.warnings))
            w.writerow(row)


def read_paths_csv(out_dir: Path) -> list[dict]:
    path = out_dir / PATHS_CSV
    if not path.exists():
        raise RiskforksError(f"{path} not found; run the multiverse first")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_subjects_csv(out_dir: Path, result) -> None:
    schemes = [s.name for s in result.config.binning]
    group_of = {s.subject_id: s.group for s in result.holdout.subjects}
    cols = ["subject_id", "group", "n_paths", "score_min", "score_max",
            "score_range", "score_sd", "ambiguous", "abstain"]
    for name in schemes:
        cols += [f"{name}_modal_bin", f"{name}_flip_rate", f"{name}_entropy"]
    with open(out_dir / SUBJECTS_CSV, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for p in result.profiles:
            row = [p.subject_id, group_of.get(p.subject_id, ""), p.n_paths,
                   _fmt(p.score_min), _fmt(p.score_max), _fmt(p.score_range),
                   _fmt(p.score_sd),
                   "" if p.ambiguous is None else _fmt(p.ambiguous), _fmt(p.abstain)]
            by_name = {sp.scheme: sp for sp in p.schemes}
            for name in schemes:
                sp = by_name[name]
                row += [sp.modal_bin, _fmt(sp.flip_rate), _fmt(sp.entropy)]
            w.writerow(row)


def read_subjects_csv(out_dir: Path) -> list[dict]:
    path = out_dir / SUBJECTS_CSV
    if not path.exists():
        raise RiskforksError(f"{path} not found; run the multiverse first")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
