"""Write the full artifact tree for a completed run."""

from __future__ import annotations

from pathlib import Path

from riskforks.artifacts import (
    write_matrix_csv,
    write_paths_csv,
    write_subjects_csv,
)
from riskforks.data import write_dataset
from riskforks.manifest import (
    build_manifest,
    dataset_content_hash,
    emit_datasheet_file,
    emit_model_cards,
    write_manifest,
)
from riskforks.runner import RunResult
from riskforks.speccurve import CurveRow, emit_curve_csv, emit_curve_svg

MAX_AUTO_CURVES = 5


def curve_rows_for_subject(result: RunResult, subject_id: str) -> list[CurveRow]:
    row = result.matrix.row(subject_id)
    by_id = {o.path_id: o for o in result.outcomes}
    rows = []
    for j, pid in enumerate(result.matrix.path_ids):
        o = by_id[pid]
        rows.append(
            CurveRow(
                path_id=pid,
                choices=o.choices,
                score=float(row[j]),
                admissible=bool(result.rashomon_decisions.get(pid, False)),
                auc=o.metrics.auc if o.metrics is not None else None,
            )
        )
    return rows


def curve_subject_ids(result: RunResult) -> list[str]:
    """Configured curve subjects plus the first few abstainers."""
    chosen = list(result.config.curve_subjects)
    abstainers = sorted(p.subject_id for p in result.profiles if p.abstain)
    for sid in abstainers:
        if len(chosen) >= len(result.config.curve_subjects) + MAX_AUTO_CURVES:
            break
        if sid not in chosen:
            chosen.append(sid)
    return chosen


def emit_curves(result: RunResult, out_dir: Path, subject_ids,
                sort: str = "score_asc") -> None:
    curves_dir = out_dir / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)
    dims = [(d.name, tuple(o.name for o in d.options))
            for d in result.config.universe.dimensions]
    dim_names = [d for d, _ in dims]
    scheme = result.config.binning[0]
    for sid in subject_ids:
        rows = curve_rows_for_subject(result, sid)
        emit_curve_csv(curves_dir / f"{sid}.csv", rows, dim_names, sort)
        emit_curve_svg(curves_dir / f"{sid}.svg", rows, dims, scheme, sid, sort,
                       result.baseline_path_id)


def emit_all(result: RunResult, out_dir: Path) -> int:
    """Write every artifact; returns the manifest hash."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if result.config.synth is not None:
        dataset_path = out_dir / "dataset.csv"
        events_path = out_dir / "events.csv"
        write_dataset(result.dataset, dataset_path, events_path)
    else:
        dataset_path = result.config.data.dataset_path
        events_path = result.config.data.events_path

    emit_datasheet_file(out_dir, result.dataset)
    write_matrix_csv(out_dir, result.matrix)
    write_paths_csv(out_dir, result)
    write_subjects_csv(out_dir, result)
    emit_model_cards(out_dir, result)
    emit_curves(result, out_dir, curve_subject_ids(result))

    dataset_hash = dataset_content_hash(dataset_path, events_path)
    manifest = build_manifest(result, dataset_hash)
    return write_manifest(out_dir, manifest)
