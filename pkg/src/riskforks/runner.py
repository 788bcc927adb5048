"""Orchestration: execute every admissible path end-to-end, deterministically.

Each path is an isolated pure task seeded from (master_seed, path_id); workers
return (path_id, result) pairs and the merge step orders them canonically, so
the outputs are a pure function of (config bytes, data bytes, master seed) —
independent of worker count and execution order. A failed path records its
reason and never aborts siblings.
"""

from __future__ import annotations

import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from riskforks import models as _models
from riskforks import pipeline as _pipe
from riskforks.config import RunConfig
from riskforks.data import Dataset, load_dataset, split_inconsistency_holdout, validate_dataset
from riskforks.errors import BaselineNotAdmissible, ConfigError, RiskforksError
from riskforks.hashing import derive_seed
from riskforks.inconsistency import (
    InconsistencyProfile,
    MultiplicityResult,
    ScoreMatrix,
    build_score_matrix,
    multiplicity_metrics,
    rashomon_filter,
    subject_profiles,
)
from riskforks.metrics import PathMetrics, compute_path_metrics, roc_crossing
from riskforks.pipeline import OutcomeDefinition
from riskforks.synth import generate_population, inject_bias
from riskforks.universe import PathConfig, UniverseSpec, enumerate_paths, path_seed, validate_universe

DEFAULT_OUTCOME_DEFAULTS = {
    "imputation": {"method": "mean_mode"},
    "rare_grouping": {"threshold": 0.0},
    "resampling": {"method": "none"},
    "subpopulation": {"predicate": {"kind": "true"}},
    "variable_selection": {"method": "none"},
}


@dataclass(frozen=True)
class PathPlan:
    outcome: OutcomeDefinition
    impute_method: str
    rare_threshold: float
    resample_method: str
    resample_target: float
    predicate: dict
    selection_method: str
    selection_params: dict
    model: _models.ModelSpec
    scheme_name: str | None


def _parse_outcome(params: dict) -> OutcomeDefinition:
    if "events" not in params or "window_days" not in params:
        raise ConfigError("outcome_definition options need 'events' and 'window_days'")
    return OutcomeDefinition(
        failure_events=frozenset(params["events"]),
        window_days=int(params["window_days"]),
        degree_filter=frozenset(params.get("degrees", _pipe.DEGREES)),
        jurisdiction_filter=frozenset(params.get("jurisdictions", _pipe.JURISDICTIONS)),
    )


def _parse_model(params: dict) -> _models.ModelSpec:
    if "family" not in params:
        raise ConfigError("model_family options need a 'family'")
    return _models.ModelSpec(
        family=params["family"],
        l2=float(params.get("l2", 0.0)),
        max_depth=int(params.get("max_depth", 5)),
        min_leaf=int(params.get("min_leaf", 5)),
        n_trees=int(params.get("n_trees", 100)),
        features_per_split=(int(params["features_per_split"])
                            if params.get("features_per_split") else None),
        class_weight=tuple(params.get("class_weight", (1.0, 1.0))),
    )


def materialize_plan(universe: UniverseSpec, choices: dict, config: RunConfig) -> PathPlan:
    """Turn one path's option payloads into concrete stage parameters.

    Dimensions left undeclared in the universe take identity-style defaults;
    outcome_definition and model_family must be declared.
    """

    def params_for(dim_name: str) -> dict | None:
        if dim_name not in choices:
            return DEFAULT_OUTCOME_DEFAULTS.get(dim_name)
        return universe.dimension(dim_name).option(choices[dim_name]).parameters

    outcome_params = params_for("outcome_definition")
    model_params = params_for("model_family")
    if outcome_params is None or model_params is None:
        raise ConfigError("universe must declare outcome_definition and model_family")
    imput = params_for("imputation")
    rare = params_for("rare_grouping")
    resamp = params_for("resampling")
    subpop = params_for("subpopulation")
    select = params_for("variable_selection")
    scheme = None
    if "binning" in choices:
        scheme = universe.dimension("binning").option(choices["binning"]).parameters.get("scheme")
    selection_params = {k: v for k, v in select.items() if k != "method"}
    return PathPlan(
        outcome=_parse_outcome(outcome_params),
        impute_method=imput.get("method", "mean_mode"),
        rare_threshold=float(rare.get("threshold", 0.0)),
        resample_method=resamp.get("method", "none"),
        resample_target=float(resamp.get("target_rate", 0.5)),
        predicate=subpop.get("predicate", {"kind": "true"}),
        selection_method=select.get("method", "none"),
        selection_params=selection_params,
        model=_parse_model(model_params),
        scheme_name=scheme,
    )


def validate_all_plans(config: RunConfig) -> None:
    """Materialize every option combination's payloads once, to fail early."""
    u = config.universe
    probe: dict = {}
    for dim in u.dimensions:
        probe[dim.name] = dim.options[0].name
    for dim in u.dimensions:
        for opt in dim.options:
            choices = dict(probe)
            choices[dim.name] = opt.name
            materialize_plan(u, choices, config)


@dataclass(frozen=True)
class PathOutcome:
    path_id: int
    choices: dict
    seed: int
    status: str  # "ok" | "failed"
    reason: str | None
    scores: np.ndarray | None
    metrics: PathMetrics | None
    selected_columns: tuple[str, ...]
    warnings: tuple[str, ...]


@dataclass(frozen=True)
class SharedRunState:
    """Read-only state shipped to every worker once."""

    config: RunConfig
    train: Dataset
    holdout: Dataset
    paths: tuple[PathConfig, ...]


def execute_path(shared: SharedRunState, path: PathConfig) -> PathOutcome:
    """Train/score one path; any package error becomes a failure record."""
    config = shared.config
    seed = path_seed(config.master_seed, path.path_id)
    try:
        plan = materialize_plan(config.universe, path.choices, config)
        warnings: list[str] = []

        train_ds = _pipe.restrict_subpopulation(shared.train, plan.predicate)
        m = _pipe.derive_outcome(train_ds, plan.outcome)
        m, impute_stats = _pipe.impute(m, plan.impute_method)
        warnings.extend(impute_stats.warnings)
        m, rare = _pipe.group_rare(m, plan.rare_threshold)
        warnings.extend(rare.warnings)
        m = _pipe.resample(m, plan.resample_method, plan.resample_target,
                           derive_seed(seed, "resample"))
        X, encoding = _pipe.encode(m)
        selection = _pipe.select_variables(
            X, m.y, encoding.column_names, plan.selection_method,
            plan.selection_params, derive_seed(seed, "select"),
        )
        warnings.extend(selection.warnings)
        X_fit = X[:, selection.indices] if not selection.intercept_only else X[:, :0]
        model = _models.fit_model(
            X_fit, m.y, plan.model, derive_seed(seed, "fit"),
            metadata={"path_id": path.path_id, "columns": selection.columns},
        )
        warnings.extend(model.warnings)

        hm = _pipe.derive_outcome(shared.holdout, plan.outcome)
        hm = _pipe.apply_impute(hm, impute_stats)
        hm = _pipe.apply_group_rare(hm, rare.merges)
        X_ho, enc_warnings = _pipe.apply_encoding(hm, encoding)
        warnings.extend(enc_warnings)
        X_ho = X_ho[:, selection.indices] if not selection.intercept_only else X_ho[:, :0]
        scores = _models.predict_proba(model, X_ho)

        groups = [s.group for s in shared.holdout.subjects]
        metrics = compute_path_metrics(
            scores, hm.y, groups, shared.holdout.subject_ids(), config.budgets,
            config.fairness_threshold, config.min_group_size,
        )
        warnings.extend(metrics.warnings)
        return PathOutcome(
            path_id=path.path_id,
            choices=path.choices,
            seed=seed,
            status="ok",
            reason=None,
            scores=scores,
            metrics=metrics,
            selected_columns=selection.columns,
            warnings=tuple(warnings),
        )
    except RiskforksError as exc:
        return PathOutcome(
            path_id=path.path_id,
            choices=path.choices,
            seed=seed,
            status="failed",
            reason=f"{type(exc).__name__}: {exc}",
            scores=None,
            metrics=None,
            selected_columns=(),
            warnings=(),
        )


_WORKER_SHARED: SharedRunState | None = None


def _init_worker(shared: SharedRunState) -> None:
    global _WORKER_SHARED
    _WORKER_SHARED = shared


def _run_task(index: int) -> PathOutcome:
    return execute_path(_WORKER_SHARED, _WORKER_SHARED.paths[index])


@dataclass(frozen=True)
class RunResult:
    config: RunConfig
    dataset: Dataset
    train: Dataset
    holdout: Dataset
    paths: tuple[PathConfig, ...]
    outcomes: tuple[PathOutcome, ...]  # canonical path order
    matrix: ScoreMatrix  # all completed paths
    admissible: ScoreMatrix  # after the rashomon rule (same object if none)
    rashomon_decisions: dict
    profiles: list[InconsistencyProfile]
    multiplicity: MultiplicityResult | None
    baseline_path_id: int | None
    roc_cross_vs_baseline: dict
    universe_raw: int
    universe_admissible: int
    wall_seconds: float
    workers_used: int


def resolve_dataset(config: RunConfig, seed_override: int | None = None):
    """Load the configured CSV pair, or generate and bias the synthetic one."""
    if config.data is not None:
        d = load_dataset(config.data.dataset_path, config.data.schema,
                         config.data.events_path, config.data.provenance)
        return d, None
    master = config.master_seed if seed_override is None else seed_override
    dataset, sidecar = generate_population(config.synth.population,
                                           derive_seed(master, "synth"))
    for i, injector in enumerate(config.synth.injectors):
        dataset = inject_bias(dataset, injector, derive_seed(master, "inject", i))
    return dataset, sidecar


def run(config: RunConfig, workers: int | None = None, log=None) -> RunResult:
    """Execute the full multiverse; returns everything the emitters need."""
    t0 = time.monotonic()
    log = log or (lambda msg: print(msg, file=sys.stderr))
    workers = workers if workers is not None else config.workers
    validate_all_plans(config)
    validation = validate_universe(config.universe)

    dataset, _sidecar = resolve_dataset(config)
    validate_dataset(dataset, config.min_group_size)
    train, holdout = split_inconsistency_holdout(
        dataset, config.holdout_fraction, config.master_seed, config.stratify_by
    )
    paths = tuple(enumerate_paths(config.universe))
    log(f"universe: raw={validation.raw_count} admissible={validation.admissible_count}")
    log(f"dataset: n={dataset.n} train={train.n} holdout={holdout.n}")

    baseline_path_id = None
    if config.baseline_choices is not None:
        wanted = dict(config.baseline_choices)
        for p in paths:
            if p.choices == wanted:
                baseline_path_id = p.path_id
                break
        if baseline_path_id is None:
            raise BaselineNotAdmissible(
                f"declared baseline {wanted!r} is not an admissible path"
            )

    shared = SharedRunState(config=config, train=train, holdout=holdout, paths=paths)
    outcomes_by_id: dict[int, PathOutcome] = {}
    if workers <= 1 or len(paths) <= 1:
        workers_used = 1
        for path in paths:
            out = execute_path(shared, path)
            outcomes_by_id[out.path_id] = out
    else:
        workers_used = min(workers, len(paths))
        with ProcessPoolExecutor(max_workers=workers_used, initializer=_init_worker,
                                 initargs=(shared,)) as pool:
            for out in pool.map(_run_task, range(len(paths)), chunksize=8):
                outcomes_by_id[out.path_id] = out
    outcomes = tuple(outcomes_by_id[p.path_id] for p in paths)

    ok = [o for o in outcomes if o.status == "ok"]
    failed = [o for o in outcomes if o.status != "ok"]
    log(f"paths: ok={len(ok)} failed={len(failed)}")

    matrix = build_score_matrix(
        holdout.subject_ids(),
        [p.path_id for p in paths],
        {o.path_id: o.scores for o in ok},
        {o.path_id: o.reason for o in failed},
    )

    metric_values = {}
    if config.rashomon is not None:
        for o in ok:
            try:
                metric_values[o.path_id] = o.metrics.scalar(config.rashomon.metric)
            except KeyError:
                metric_values[o.path_id] = float("nan")
        admissible, decisions = rashomon_filter(matrix, metric_values, config.rashomon)
    else:
        admissible, decisions = matrix, {pid: True for pid in matrix.path_ids}

    if baseline_path_id is not None and baseline_path_id not in admissible.path_ids:
        raise BaselineNotAdmissible(
            f"baseline path {baseline_path_id} was dropped "
            f"({'failed' if baseline_path_id not in matrix.path_ids else 'below the rashomon rule'})"
        )

    profiles = subject_profiles(
        admissible, config.binning, config.abstain_range, config.abstain_flip,
        baseline_path_id, config.fairness_threshold,
    )
    multiplicity = None
    if baseline_path_id is not None:
        multiplicity = multiplicity_metrics(admissible, baseline_path_id,
                                            config.fairness_threshold)

    roc_flags: dict[int, bool] = {}
    if baseline_path_id is not None:
        base_out = outcomes_by_id[baseline_path_id]
        base_plan = materialize_plan(config.universe, base_out.choices, config)
        base_labels = _pipe.derive_outcome(holdout, base_plan.outcome).y
        base_scores = matrix.column(baseline_path_id)
        if base_labels.min() != base_labels.max():
            for o in ok:
                roc_flags[o.path_id] = roc_crossing(o.scores, base_scores,
                                                    base_labels).crosses

    return RunResult(
        config=config,
        dataset=dataset,
        train=train,
        holdout=holdout,
        paths=paths,
        outcomes=outcomes,
        matrix=matrix,
        admissible=admissible,
        rashomon_decisions=decisions,
        profiles=profiles,
        multiplicity=multiplicity,
        baseline_path_id=baseline_path_id,
        roc_cross_vs_baseline=roc_flags,
        universe_raw=validation.raw_count,
        universe_admissible=validation.admissible_count,
        wall_seconds=time.monotonic() - t0,
        workers_used=workers_used,
    )
