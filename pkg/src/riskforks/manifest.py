"""Run manifest: the reproducibility anchor, plus model cards.

The manifest covers every input that can affect any score: config content
hash (canonical form, volatile keys excluded), dataset content hash (raw file
bytes), tool version, master seed, and per-path records (id, seed, choices,
status, metrics hash, admissibility). Two runs with equal manifest hashes
produce bit-identical outputs. Wall-clock time and worker count are
deliberately not persisted: they cannot affect scores, and keeping them out
of the output tree preserves byte-identical reruns.
"""

from __future__ import annotations

from pathlib import Path

from riskforks import __version__
from riskforks.artifacts import path_hex
from riskforks.data import datasheet_text
from riskforks.hashing import canonical_json, fnv1a64, stable_hash


def dataset_content_hash(dataset_path: Path, events_path: Path | None) -> int:
    data = Path(dataset_path).read_bytes()
    if events_path is not None and Path(events_path).exists():
        data += b"\x00" + Path(events_path).read_bytes()
    return fnv1a64(data)


def _metrics_payload(metrics) -> dict:
    if metrics is None:
        return {}
    return {
        "auc": metrics.auc,
        "brier": metrics.brier,
        "ece": metrics.ece,
        "lifts": {f"{k:g}": v for k, v in metrics.lifts.items()},
        "gaps": dict(metrics.fairness.gaps),
    }


def build_manifest(result, dataset_hash: int) -> dict:
    """Canonical (hashable) manifest core for a completed run.

    Embeds the semantic config document (volatile keys stripped) so a run can
    be replayed from the manifest plus the data files alone.
    """
    paths = []
    for o in result.outcomes:
        paths.append({
            "path_id": path_hex(o.path_id),
            "seed": o.seed,
            "choices": dict(o.choices),
            "status": o.status,
            "reason": o.reason,
            "metrics_hash": path_hex(stable_hash(_metrics_payload(o.metrics))),
            "rashomon_admissible": bool(result.rashomon_decisions.get(o.path_id, False)),
        })
    from riskforks.config import VOLATILE_KEYS

    semantic_config = {k: v for k, v in result.config.raw.items()
                       if k not in VOLATILE_KEYS}
    return {
        "tool": "riskforks",
        "version": __version__,
        "master_seed": result.config.master_seed,
        "config_hash": path_hex(result.config.content_hash()),
        "config": semantic_config,
        "dataset_hash": path_hex(dataset_hash),
        "universe": {"raw": result.universe_raw, "admissible": result.universe_admissible},
        "baseline_path_id": (path_hex(result.baseline_path_id)
                             if result.baseline_path_id is not None else None),
        "holdout_subjects": list(result.holdout.subject_ids()),
        "paths": paths,
    }


def manifest_hash(manifest: dict) -> int:
    return stable_hash(manifest)


def write_manifest(out_dir: Path, manifest: dict) -> int:
    """Write manifest.json (canonical bytes) and its manifest.hash sidecar."""
    text = canonical_json(manifest)
    (out_dir / "manifest.json").write_text(text + "\n", encoding="utf-8")
    h = manifest_hash(manifest)
    (out_dir / "manifest.hash").write_text(f"fnv1a64:{path_hex(h)}\n", encoding="utf-8")
    return h


def read_manifest(out_dir: Path) -> dict:
    import json

    return json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# model cards and datasheet
# --------------------------------------------------------------------------

def _card_text(result, outcome) -> str:
    config = result.config
    lines = [
        f"# Model card: path {path_hex(outcome.path_id)}",
        "",
        "## Intended use",
        "One forking path of a multiverse audit of a binary risk-scoring",
        "pipeline. Scores support inconsistency profiling of the holdout,",
        "not standalone deployment decisions.",
        "",
        "## Pipeline choices and their reasonableness",
    ]
    for dim in config.universe.dimensions:
        choice = outcome.choices.get(dim.name)
        if choice is None:
            continue
        opt = dim.option(choice)
        lines.append(f"- {dim.name} = {choice} [{opt.provenance}]")
        rationale = opt.rationale.strip() or "(no rationale recorded)"
        lines.append(f"    rationale: {rationale}")
    lines += ["", "## Data provenance"]
    for key in sorted(result.dataset.provenance):
        lines.append(f"- {key}: {result.dataset.provenance[key]}")
    lines += ["", "## Holdout metrics"]
    m = outcome.metrics
    if m is not None:
        lines.append(f"- auc: {m.auc:.4f}")
        lines.append(f"- brier: {m.brier:.4f}")
        lines.append(f"- ece: {m.ece:.4f}")
        for k in sorted(m.lifts):
            lines.append(f"- lift@{k:g}: {m.lifts[k]:.4f}")
        lines += ["", "## Fairness summary (gaps are max-min across groups)"]
        for q in sorted(m.fairness.gaps):
            lines.append(f"- gap_{q}: {m.fairness.gaps[q]:.4f}")
        if m.fairness.excluded:
            lines.append(f"- excluded small groups: {', '.join(m.fairness.excluded)}")
    admissible = result.rashomon_decisions.get(outcome.path_id, False)
    lines += ["", f"## Admissibility: {'in' if admissible else 'out of'} the Rashomon set"]
    if outcome.selected_columns:
        lines += ["", "## Selected columns", "- " + ", ".join(outcome.selected_columns)]
    if outcome.warnings:
        lines += ["", "## Warnings"] + [f"- {w}" for w in outcome.warnings]
    return "\n".join(lines) + "\n"


def emit_model_cards(out_dir: Path, result) -> int:
    cards_dir = out_dir / "cards"
    cards_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for o in result.outcomes:
        if o.status != "ok" or not result.rashomon_decisions.get(o.path_id, False):
            continue
        (cards_dir / f"{path_hex(o.path_id)}.txt").write_text(
            _card_text(result, o), encoding="utf-8"
        )
        count += 1
    return count


def emit_datasheet_file(out_dir: Path, dataset) -> None:
    (out_dir / "datasheet.txt").write_text(datasheet_text(dataset), encoding="utf-8")
