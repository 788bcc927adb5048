"""Command-line surface.

Subcommands: synth, validate, run, profile, curve, report. Exit codes:
0 success, 1 run/lookup failure, 2 usage error (argparse default).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from riskforks import __version__
from riskforks.artifacts import (
    path_hex,
    read_matrix_csv,
    read_paths_csv,
    read_subjects_csv,
)
from riskforks.config import RunConfig, parse_config
from riskforks.data import write_dataset
from riskforks.emit import emit_all
from riskforks.errors import RiskforksError, UnknownSubject
from riskforks.inconsistency import ScoreMatrix, multiplicity_metrics
from riskforks.manifest import read_manifest
from riskforks.runner import resolve_dataset, run
from riskforks.speccurve import SORT_MODES, CurveRow, emit_curve_csv, emit_curve_svg
from riskforks.universe import validate_universe


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="path to the run configuration JSON")
    parser.add_argument("--out", help="output directory (overrides config)", default=None)
    parser.add_argument("--master-seed", type=int, default=None,
                        help="master seed (overrides config)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskforks",
        description="Multiverse analysis of risk-prediction pipelines.",
    )
    parser.add_argument("--version", action="version", version=f"riskforks {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("synth", help="generate the synthetic dataset files"))
    _add_common(sub.add_parser("validate", help="check config and universe; print path counts"))
    _add_common(sub.add_parser("run", help="execute every admissible path and emit artifacts"))

    p_profile = sub.add_parser("profile", help="print one subject's inconsistency profile")
    _add_common(p_profile)
    p_profile.add_argument("--subject", required=True)

    p_curve = sub.add_parser("curve", help="emit a specification curve for one subject")
    _add_common(p_curve)
    p_curve.add_argument("--subject", required=True)
    p_curve.add_argument("--format", choices=("svg", "csv"), default="svg")
    p_curve.add_argument("--sort", choices=SORT_MODES, default="score_asc")

    _add_common(sub.add_parser("report", help="global summary plus report figures"))
    return parser


def _load_config(args) -> RunConfig:
    config = parse_config(args.config)
    overrides = {}
    if args.master_seed is not None:
        overrides["master_seed"] = args.master_seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["out"] = args.out
    if overrides:
        raw = dict(config.raw)
        raw.update(overrides)
        config = parse_config(raw, base_dir=Path(args.config).parent)
    return config


def _out_dir(config: RunConfig) -> Path:
    if config.out is None:
        raise RiskforksError("no output directory: set 'out' in the config or pass --out")
    return config.out


def cmd_synth(config: RunConfig) -> int:
    if config.synth is None:
        raise RiskforksError("config has no synth section")
    out = _out_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    dataset, _ = resolve_dataset(config)
    write_dataset(dataset, out / "dataset.csv", out / "events.csv")
    print(f"wrote {out / 'dataset.csv'} and {out / 'events.csv'} (n={dataset.n})")
    return 0


def cmd_validate(config: RunConfig) -> int:
    from riskforks.runner import validate_all_plans

    validate_all_plans(config)
    v = validate_universe(config.universe)
    print(f"raw={v.raw_count} admissible={v.admissible_count}")
    for wmsg in v.warnings:
        print(f"warning: {wmsg}")
    if config.synth is not None:
        print(f"data: synthetic population n={config.synth.population.n}")
    else:
        print(f"data: {config.data.dataset_path}")
    print("config ok")
    return 0


def cmd_run(config: RunConfig) -> int:
    out = _out_dir(config)
    result = run(config)
    manifest_hash = emit_all(result, out)
    ok = sum(1 for o in result.outcomes if o.status == "ok")
    failed = len(result.outcomes) - ok
    print(f"paths: ok={ok} failed={failed} "
          f"rashomon_admissible={len(result.admissible.path_ids)}")
    if result.multiplicity is not None:
        print(f"ambiguity={result.multiplicity.ambiguity:.4f} "
              f"discrepancy={result.multiplicity.discrepancy:.4f}")
    n_abstain = sum(1 for p in result.profiles if p.abstain)
    print(f"abstaining subjects: {n_abstain}/{len(result.profiles)}")
    print(f"manifest: fnv1a64:{path_hex(manifest_hash)}")
    print(f"wall={result.wall_seconds:.1f}s workers={result.workers_used}")
    return 0 if ok > 0 else 1


def cmd_profile(config: RunConfig, subject: str) -> int:
    out = _out_dir(config)
    rows = read_subjects_csv(out)
    row = next((r for r in rows if r["subject_id"] == subject), None)
    if row is None:
        raise UnknownSubject(f"subject {subject!r} is not in the holdout profiles")
    for key, value in row.items():
        print(f"{key}: {value}")
    return 0


def _matrix_from_artifacts(out: Path) -> ScoreMatrix:
    subject_ids, path_ids, scores = read_matrix_csv(out)
    return ScoreMatrix(subject_ids, path_ids, scores)


def cmd_curve(config: RunConfig, subject: str, fmt: str, sort: str) -> int:
    out = _out_dir(config)
    matrix = _matrix_from_artifacts(out)
    if subject not in matrix.subject_ids:
        raise UnknownSubject(f"subject {subject!r} is not in the holdout")
    manifest = read_manifest(out)
    paths_meta = {int(p["path_id"], 16): p for p in manifest["paths"]}
    aucs = {}
    for r in read_paths_csv(out):
        if r["auc"]:
            aucs[int(r["path_id"], 16)] = float(r["auc"])
    row = matrix.row(subject)
    rows = []
    for j, pid in enumerate(matrix.path_ids):
        meta = paths_meta[pid]
        rows.append(CurveRow(
            path_id=pid,
            choices=meta["choices"],
            score=float(row[j]),
            admissible=bool(meta["rashomon_admissible"]),
            auc=aucs.get(pid),
        ))
    dims = [(d.name, tuple(o.name for o in d.options))
            for d in config.universe.dimensions]
    curves_dir = out / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)
    target = curves_dir / f"{subject}.{fmt}"
    baseline = manifest.get("baseline_path_id")
    if fmt == "csv":
        emit_curve_csv(target, rows, [d for d, _ in dims], sort)
    else:
        emit_curve_svg(target, rows, dims, config.binning[0], subject, sort,
                       int(baseline, 16) if baseline else None)
    print(f"wrote {target}")
    return 0


def cmd_report(config: RunConfig) -> int:
    from riskforks.figures import render_report_figures

    out = _out_dir(config)
    subjects_rows = read_subjects_csv(out)
    paths_rows = read_paths_csv(out)
    manifest = read_manifest(out)

    n_ok = sum(1 for r in paths_rows if r["status"] == "ok")
    n_failed = len(paths_rows) - n_ok
    n_admissible = sum(1 for r in paths_rows if r["rashomon_admissible"] == "true")
    n_abstain = sum(1 for r in subjects_rows if r["abstain"] == "true")
    n_ambiguous = sum(1 for r in subjects_rows if r.get("ambiguous") == "true")

    lines = [
        "# Multiverse report",
        f"universe: raw={manifest['universe']['raw']} "
        f"admissible={manifest['universe']['admissible']}",
        f"paths: ok={n_ok} failed={n_failed} rashomon_admissible={n_admissible}",
        f"holdout subjects: {len(subjects_rows)}",
        f"abstaining subjects: {n_abstain}",
        f"decision-ambiguous subjects vs baseline: {n_ambiguous}",
    ]
    baseline = manifest.get("baseline_path_id")
    if baseline:
        matrix = _matrix_from_artifacts(out)
        mult = multiplicity_metrics(matrixes_admissible(matrix, paths_rows),
                                    int(baseline, 16), config.fairness_threshold)
        lines.append(f"ambiguity={mult.ambiguity:.4f} discrepancy={mult.discrepancy:.4f} "
                     f"(threshold {mult.threshold:g}, baseline {baseline})")
    top = sorted(subjects_rows, key=lambda r: -float(r["score_range"]))[:5]
    lines.append("most inconsistent subjects (score range):")
    for r in top:
        lines.append(f"  {r['subject_id']}: range={float(r['score_range']):.3f} "
                     f"sd={float(r['score_sd']):.3f} abstain={r['abstain']}")
    lines.append("")
    lines.append("caveat: only quantifiable forks are enumerated; observed "
                 "inconsistency is a lower bound on the total.")
    lines.append("caveat: abstention thresholds are artifact defaults "
                 f"(range>{config.abstain_range:g} or flip>{config.abstain_flip:g}), "
                 "not values from the risk-assessment literature.")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")

    rashomon_value = (config.rashomon.value
                      if config.rashomon and config.rashomon.mode == "absolute" else None)
    written = render_report_figures(out, subjects_rows, paths_rows,
                                    config.abstain_range, rashomon_value)
    for p in written:
        print(f"wrote {p}")
    print(f"wrote {out / 'report.txt'}")
    return 0


def matrixes_admissible(matrix: ScoreMatrix, paths_rows: list[dict]) -> ScoreMatrix:
    admissible = {int(r["path_id"], 16) for r in paths_rows
                  if r["rashomon_admissible"] == "true"}
    keep = [j for j, pid in enumerate(matrix.path_ids) if pid in admissible]
    return ScoreMatrix(
        matrix.subject_ids,
        tuple(matrix.path_ids[j] for j in keep),
        matrix.scores[:, keep],
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "synth":
            return cmd_synth(config)
        if args.command == "validate":
            return cmd_validate(config)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "profile":
            return cmd_profile(config, args.subject)
        if args.command == "curve":
            return cmd_curve(config, args.subject, args.format, args.sort)
        if args.command == "report":
            return cmd_report(config)
        raise AssertionError(f"unhandled command {args.command!r}")
    except RiskforksError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
