import csv
import json
from pathlib import Path

import numpy as np
import pytest

from riskforks.cli import main as cli_main
from riskforks.config import parse_config
from riskforks.emit import emit_all
from riskforks.errors import ConfigError
from riskforks.inconsistency import BinningScheme
from riskforks.manifest import read_manifest
from riskforks.runner import SharedRunState, execute_path, run
from riskforks.speccurve import CurveRow, emit_curve_csv, emit_curve_svg

GOLDEN = Path(__file__).parent / "golden" / "spec_curve.svg"


def _base_config(n=400, workers=1, extra_dims=(), master_seed=11, inject_missing=0.1):
    dims = [
        {"name": "outcome_definition", "options": [
            {"name": "y2", "parameters": {"events": ["conviction"], "window_days": 730},
             "rationale": "r", "provenance": "local_law"},
        ]},
        {"name": "imputation", "options": [
            {"name": "mm", "parameters": {"method": "mean_mode"}, "rationale": "r"},
        ]},
        {"name": "model_family", "options": [
            {"name": "logit", "parameters": {"family": "logistic", "l2": 1.0},
             "rationale": "r"},
        ]},
        *extra_dims,
    ]
    return {
        "master_seed": master_seed,
        "workers": workers,
        "synth": {
            "population": {
                "n": n,
                "anchor_day": 3650,
                "features": [
                    {"name": "age", "kind": "numeric", "mean": 35, "sd": 10},
                    {"name": "priors_score", "kind": "numeric", "mean": 0, "sd": 1},
                ],
                "groups": {"A": 0.6, "B": 0.4},
                "coefficients": {"priors_score": 0.8},
                "hazard": {"targets": [[730, 0.3]], "mode": "population"},
            },
            "injectors": (
                [{"kind": "missingness",
                  "params": {"feature": "priors_score", "mechanism": "MCAR",
                             "rate": inject_missing}}] if inject_missing else []
            ),
        },
        "holdout": {"fraction": 0.25},
        "universe": {"dimensions": dims, "constraints": []},
        "baseline": {d["name"]: d["options"][0]["name"] for d in dims},
        "binning": [{"name": "three_level", "bins": 3, "labels": ["low", "medium", "high"]}],
        "budgets": [0.1],
        "fairness": {"threshold": 0.5, "min_group_size": 20},
    }


# --- config parsing ---------------------------------------------------------

def test_config_requires_master_seed():
    raw = _base_config()
    del raw["master_seed"]
    with pytest.raises(ConfigError, match="master_seed"):
        parse_config(raw)


def test_config_exactly_one_data_source():
    raw = _base_config()
    raw["data"] = {"dataset": "x.csv", "schema": []}
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(raw)
    del raw["data"]
    del raw["synth"]
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(raw)


def test_config_rejects_unknown_rashomon_metric():
    raw = _base_config()
    raw["rashomon"] = {"metric": "accuracy", "mode": "absolute", "value": 0.7}
    with pytest.raises(ConfigError, match="accuracy"):
        parse_config(raw)


def test_config_baseline_must_cover_dimensions():
    raw = _base_config()
    raw["baseline"] = {"outcome_definition": "y2"}
    with pytest.raises(ConfigError, match="baseline"):
        parse_config(raw)


def test_config_hash_ignores_volatile_keys():
    a = parse_config(_base_config(workers=1))
    b = parse_config(_base_config(workers=8))
    assert a.content_hash() == b.content_hash()
    c = parse_config(_base_config(master_seed=12))
    assert a.content_hash() != c.content_hash()


# --- runner -----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    seeds = [
        {"name": "model_seed", "options": [
            {"name": "s1", "parameters": {}, "rationale": "r"},
            {"name": "s2", "parameters": {}, "rationale": "r"},
        ]},
    ]
    config = parse_config(_base_config(extra_dims=seeds))
    result = run(config, workers=1, log=lambda _msg: None)
    out = tmp_path_factory.mktemp("run")
    manifest_hash = emit_all(result, out)
    return config, result, out, manifest_hash


def test_run_smoke_all_paths_ok(small_run):
    _, result, out, _ = small_run
    assert len(result.outcomes) == 2
    assert all(o.status == "ok" for o in result.outcomes)
    assert result.matrix.scores.shape == (result.holdout.n, 2)
    for name in ("dataset.csv", "events.csv", "datasheet.txt", "matrix.csv",
                 "paths.csv", "subjects.csv", "manifest.json", "manifest.hash"):
        assert (out / name).exists(), name


def test_manifest_lists_every_path_with_status(small_run):
    _, result, out, manifest_hash = small_run
    manifest = read_manifest(out)
    assert len(manifest["paths"]) == 2
    assert all(p["status"] == "ok" for p in manifest["paths"])
    assert manifest["master_seed"] == 11
    stored = (out / "manifest.hash").read_text()
    assert f"{manifest_hash:016x}" in stored


def test_model_cards_one_per_admissible_path(small_run):
    _, result, out, _ = small_run
    cards = list((out / "cards").glob("*.txt"))
    assert len(cards) == len(result.admissible.path_ids)
    text = cards[0].read_text()
    assert "Model card" in text
    assert "rationale" in text


def test_run_failed_path_recorded():
    # a 1-subject stratum cannot happen here; force failure via complete_case
    # dropping every training row (missingness rate 1.0)
    dims = [
        {"name": "imputation", "options": [
            {"name": "cc", "parameters": {"method": "complete_case"}, "rationale": "r"},
            {"name": "mm", "parameters": {"method": "mean_mode"}, "rationale": "r"},
        ]},
    ]
    raw = _base_config(n=200, inject_missing=0.995)
    raw["universe"]["dimensions"] = [raw["universe"]["dimensions"][0], *dims,
                                     raw["universe"]["dimensions"][2]]
    raw["baseline"] = {"outcome_definition": "y2", "imputation": "mm",
                       "model_family": "logit"}
    config = parse_config(raw)
    result = run(config, workers=1, log=lambda _msg: None)
    by_status = {o.choices["imputation"]: o.status for o in result.outcomes}
    assert by_status == {"cc": "failed", "mm": "ok"}
    failed = [o for o in result.outcomes if o.status == "failed"][0]
    assert "AllRowsDropped" in failed.reason
    assert result.matrix.path_ids == tuple(
        o.path_id for o in result.outcomes if o.status == "ok"
    )
    assert result.matrix.failures[0].path_id == failed.path_id


def test_leakage_canary_holdout_extreme_value_changes_nothing():
    config = parse_config(_base_config(n=300))
    result = run(config, workers=1, log=lambda _msg: None)
    shared = SharedRunState(config, result.train, result.holdout, result.paths)
    baseline_outcome = execute_path(shared, result.paths[0])

    victim = result.holdout.subjects[0]
    from riskforks.data import SubjectRecord

    planted = SubjectRecord(victim.subject_id, victim.group, victim.anchor_day,
                            {**victim.features, "priors_score": 1e9}, victim.events)
    mutated_holdout = result.holdout.with_subjects(
        (planted, *result.holdout.subjects[1:])
    )
    shared2 = SharedRunState(config, result.train, mutated_holdout, result.paths)
    mutated_outcome = execute_path(shared2, result.paths[0])
    # every other subject's score is bit-identical: the fit never saw the holdout
    assert np.array_equal(baseline_outcome.scores[1:], mutated_outcome.scores[1:])
    assert baseline_outcome.scores[0] != mutated_outcome.scores[0]


def test_workers_parallel_identical_to_serial():
    config = parse_config(_base_config(n=250, extra_dims=[
        {"name": "model_seed", "options": [
            {"name": f"s{i}", "parameters": {}, "rationale": "r"} for i in range(3)
        ]},
    ]))
    serial = run(config, workers=1, log=lambda _msg: None)
    parallel = run(config, workers=3, log=lambda _msg: None)
    assert np.array_equal(serial.matrix.scores, parallel.matrix.scores)
    assert serial.matrix.path_ids == parallel.matrix.path_ids


# --- curves -----------------------------------------------------------------

def _curve_rows():
    return [
        CurveRow(path_id=0x0102030405060708,
                 choices={"outcome_definition": "y2", "model_family": "logit"},
                 score=0.31, admissible=True, auc=0.71),
        CurveRow(path_id=0x1112131415161718,
                 choices={"outcome_definition": "y4", "model_family": "logit"},
                 score=0.55, admissible=True, auc=0.68),
        CurveRow(path_id=0x2122232425262728,
                 choices={"outcome_definition": "y2", "model_family": "forest"},
                 score=0.27, admissible=False, auc=0.55),
        CurveRow(path_id=0x3132333435363738,
                 choices={"outcome_definition": "y4", "model_family": "forest"},
                 score=0.72, admissible=True, auc=0.70),
    ]


def test_curve_csv_shape_and_sort(tmp_path):
    target = tmp_path / "c.csv"
    emit_curve_csv(target, _curve_rows(), ["outcome_definition", "model_family"],
                   "score_asc")
    with open(target) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    assert header == ["path_id", "outcome_definition", "model_family",
                      "score", "admissible", "auc"]
    assert len(header) == 2 + 2 + 2  # path_id + dims + (score, admissible, auc)
    assert len(body) == 4
    scores = [float(r[3]) for r in body]
    assert scores == sorted(scores)


def test_curve_svg_matches_golden(tmp_path):
    scheme = BinningScheme("three", (1 / 3, 2 / 3), ("low", "medium", "high"))
    target = tmp_path / "c.svg"
    emit_curve_svg(target, _curve_rows(),
                   [("outcome_definition", ("y2", "y4")),
                    ("model_family", ("logit", "forest"))],
                   scheme, "S042", "score_asc",
                   baseline_path_id=0x1112131415161718)

    def strip(text: str) -> str:
        return "\n".join(l for l in text.splitlines() if not l.startswith("<!--"))

    assert strip(target.read_text()) == strip(GOLDEN.read_text())


def test_curve_svg_deterministic(tmp_path):
    scheme = BinningScheme("three", (1 / 3, 2 / 3), ("low", "medium", "high"))
    dims = [("outcome_definition", ("y2", "y4")), ("model_family", ("logit", "forest"))]
    emit_curve_svg(tmp_path / "a.svg", _curve_rows(), dims, scheme, "S1", "score_asc")
    emit_curve_svg(tmp_path / "b.svg", _curve_rows(), dims, scheme, "S1", "score_asc")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_run_curve_csv_row_count_matches_universe(tmp_path):
    # 24-path universe: rows = 24, columns = dims + 4
    extra = [
        {"name": "imputation2"},  # placeholder replaced below
    ]
    raw = _base_config(n=300)
    raw["universe"]["dimensions"] = [
        raw["universe"]["dimensions"][0],
        {"name": "imputation", "options": [
            {"name": m, "parameters": {"method": m}, "rationale": "r"}
            for m in ("complete_case", "mean_mode", "indicator")
        ]},
        {"name": "rare_grouping", "options": [
            {"name": f"t{t}", "parameters": {"threshold": t}, "rationale": "r"}
            for t in (0.0, 0.05)
        ]},
        {"name": "model_family", "options": [
            {"name": "logit", "parameters": {"family": "logistic", "l2": 1.0},
             "rationale": "r"},
            {"name": "cart", "parameters": {"family": "tree", "max_depth": 4,
                                            "min_leaf": 10}, "rationale": "r"},
        ]},
        {"name": "model_seed", "options": [
            {"name": "s1", "parameters": {}, "rationale": "r"},
            {"name": "s2", "parameters": {}, "rationale": "r"},
        ]},
    ]
    raw["baseline"] = {"outcome_definition": "y2", "imputation": "mean_mode",
                       "rare_grouping": "t0.0", "model_family": "logit",
                       "model_seed": "s1"}
    raw["curve_subjects"] = []
    config = parse_config(raw)
    result = run(config, workers=1, log=lambda _msg: None)
    assert len(result.paths) == 24
    out = tmp_path / "out"
    emit_all(result, out)
    sid = result.holdout.subject_ids()[0]
    from riskforks.emit import curve_rows_for_subject, emit_curves

    emit_curves(result, out, [sid])
    with open(out / "curves" / f"{sid}.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) - 1 == 24
    assert len(rows[0]) == 5 + 4


# --- CLI --------------------------------------------------------------------

def _write_config(tmp_path, raw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    return path


def test_cli_validate_prints_counts(tmp_path, capsys):
    path = _write_config(tmp_path, _base_config())
    assert cli_main(["validate", str(path)]) == 0
    out = capsys.readouterr().out
    assert "raw=1 admissible=1" in out


def test_cli_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli_main(["frobnicate", "x.json"])
    assert exc.value.code == 2


def test_cli_run_profile_curve_report(tmp_path, capsys):
    raw = _base_config(n=250, extra_dims=[
        {"name": "model_seed", "options": [
            {"name": "s1", "parameters": {}, "rationale": "r"},
            {"name": "s2", "parameters": {}, "rationale": "r"},
        ]},
    ])
    raw["out"] = "outdir"
    path = _write_config(tmp_path, raw)
    assert cli_main(["run", str(path)]) == 0
    out_dir = tmp_path / "outdir"
    assert (out_dir / "matrix.csv").exists()

    with open(out_dir / "subjects.csv") as fh:
        sid = list(csv.DictReader(fh))[0]["subject_id"]
    capsys.readouterr()
    assert cli_main(["profile", str(path), "--subject", sid]) == 0
    assert f"subject_id: {sid}" in capsys.readouterr().out

    assert cli_main(["curve", str(path), "--subject", sid, "--format", "csv"]) == 0
    assert (out_dir / "curves" / f"{sid}.csv").exists()
    assert cli_main(["curve", str(path), "--subject", sid, "--format", "svg"]) == 0
    assert (out_dir / "curves" / f"{sid}.svg").exists()

    assert cli_main(["curve", str(path), "--subject", "NOBODY"]) == 1

    capsys.readouterr()
    assert cli_main(["report", str(path)]) == 0
    report_out = capsys.readouterr().out
    assert "ambiguity=" in report_out
    assert (out_dir / "report.txt").exists()
    assert (out_dir / "figures" / "score_range_hist.png").exists()


def test_cli_unknown_profile_subject_exit_1(tmp_path, capsys):
    raw = _base_config(n=250)
    raw["out"] = "outdir"
    path = _write_config(tmp_path, raw)
    assert cli_main(["run", str(path)]) == 0
    assert cli_main(["profile", str(path), "--subject", "NOBODY"]) == 1


# --- manifest replay and statuses ---------------------------------------------

def test_manifest_embeds_config_and_replays_identically(tmp_path):
    raw = _base_config(n=250, extra_dims=[
        {"name": "model_seed", "options": [
            {"name": "s1", "parameters": {}, "rationale": "r"},
            {"name": "s2", "parameters": {}, "rationale": "r"},
        ]},
    ])
    config = parse_config(raw)
    result = run(config, workers=1, log=lambda _msg: None)
    out1 = tmp_path / "orig"
    emit_all(result, out1)

    manifest = read_manifest(out1)
    replayed_config = parse_config(manifest["config"])
    replayed = run(replayed_config, workers=1, log=lambda _msg: None)
    out2 = tmp_path / "replay"
    emit_all(replayed, out2)
    assert (out1 / "matrix.csv").read_bytes() == (out2 / "matrix.csv").read_bytes()
    assert (out1 / "manifest.hash").read_bytes() == (out2 / "manifest.hash").read_bytes()


def test_manifest_lists_failed_paths_with_reasons(tmp_path):
    raw = _base_config(n=200, inject_missing=0.995)
    raw["universe"]["dimensions"] = [
        raw["universe"]["dimensions"][0],
        {"name": "imputation", "options": [
            {"name": "cc", "parameters": {"method": "complete_case"}, "rationale": "r"},
            {"name": "mm", "parameters": {"method": "mean_mode"}, "rationale": "r"},
            {"name": "ind", "parameters": {"method": "indicator"}, "rationale": "r"},
        ]},
        raw["universe"]["dimensions"][2],
    ]
    raw["baseline"] = {"outcome_definition": "y2", "imputation": "mm",
                       "model_family": "logit"}
    config = parse_config(raw)
    result = run(config, workers=1, log=lambda _msg: None)
    out = tmp_path / "o"
    emit_all(result, out)
    manifest = read_manifest(out)
    statuses = {p["choices"]["imputation"]: p["status"] for p in manifest["paths"]}
    assert statuses == {"cc": "failed", "mm": "ok", "ind": "ok"}
    failed = [p for p in manifest["paths"] if p["status"] == "failed"]
    assert "AllRowsDropped" in failed[0]["reason"]


def test_baseline_dropped_by_rashomon_raises():
    from riskforks.errors import BaselineNotAdmissible

    raw = _base_config(n=400, extra_dims=[])
    raw["universe"]["dimensions"][2]["options"].append(
        {"name": "coin", "parameters": {"family": "logistic", "l2": 1e9},
         "rationale": "absurd ridge gives a near-constant, weaker model"})
    raw["baseline"]["model_family"] = "coin"
    raw["rashomon"] = {"metric": "auc", "mode": "relative", "value": 0.0}
    config = parse_config(raw)
    with pytest.raises(BaselineNotAdmissible):
        run(config, workers=1, log=lambda _msg: None)
