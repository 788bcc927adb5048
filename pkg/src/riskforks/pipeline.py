"""Pre-model stages of a single path.

Order of operations per path: restrict subpopulation (training data only),
derive the outcome labels, impute, group rare levels, resample, one-hot
encode, select variables. Every statistic used to transform data is computed
on training rows and frozen, then re-applied to the holdout at predict time —
holdout rows never influence a fitted parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from riskforks import models as _models
from riskforks.data import DEGREES, EVENT_KINDS, JURISDICTIONS, Dataset
from riskforks.errors import (
    AllRowsDropped,
    DegenerateDesign,
    EmptyMinority,
    EmptyResult,
    SchemaMismatch,
)
from riskforks.hashing import derive_seed
from riskforks.predicates import describe_predicate, subject_matches, validate_predicate

OTHER_LEVEL = "__OTHER__"
MISSING_LEVEL = "__MISSING__"


@dataclass(frozen=True)
class OutcomeDefinition:
    """Which post-anchor events count as failure, within how many days."""

    failure_events: frozenset
    window_days: int
    degree_filter: frozenset = frozenset(DEGREES)
    jurisdiction_filter: frozenset = frozenset(JURISDICTIONS)

    def __post_init__(self):
        if not self.failure_events:
            raise ValueError("outcome definition needs at least one failure event kind")
        unknown = set(self.failure_events) - set(EVENT_KINDS)
        if unknown:
            raise ValueError(f"unknown failure event kinds: {sorted(unknown)}")
        if self.window_days < 0:
            raise ValueError("window_days must be >= 0")

    def label(self, subject) -> int:
        lo, hi = subject.anchor_day, subject.anchor_day + self.window_days
        for ev in subject.events:
            if (
                lo < ev.day <= hi
                and ev.event_kind in self.failure_events
                and ev.degree in self.degree_filter
                and ev.jurisdiction in self.jurisdiction_filter
            ):
                return 1
        return 0


@dataclass(frozen=True)
class LabeledMatrix:
    """Labeled feature columns for one path, pre- or post-encoding.

    numeric holds float arrays with NaN as missing; categorical holds object
    arrays with None as missing. feature_order fixes column order for
    encoding. Rows align with subject_ids and y throughout.
    """

    subject_ids: tuple[str, ...]
    feature_order: tuple[str, ...]
    numeric: dict
    categorical: dict
    y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def base_rate(self) -> float:
        return float(self.y.mean()) if self.n else 0.0

    def take(self, idx: np.ndarray) -> "LabeledMatrix":
        return LabeledMatrix(
            subject_ids=tuple(self.subject_ids[i] for i in idx),
            feature_order=self.feature_order,
            numeric={k: v[idx] for k, v in self.numeric.items()},
            categorical={k: v[idx] for k, v in self.categorical.items()},
            y=self.y[idx],
        )


def derive_outcome(dataset: Dataset, outcome: OutcomeDefinition) -> LabeledMatrix:
    """Binary labels from the event log plus raw feature columns."""
    numeric: dict[str, np.ndarray] = {}
    categorical: dict[str, np.ndarray] = {}
    for spec in dataset.schema.features:
        if spec.kind == "numeric":
            numeric[spec.name] = np.array(
                [s.features.get(spec.name) if s.features.get(spec.name) is not None else np.nan
                 for s in dataset.subjects],
                dtype=float,
            )
        else:
            categorical[spec.name] = np.array(
                [s.features.get(spec.name) for s in dataset.subjects], dtype=object
            )
    y = np.array([outcome.label(s) for s in dataset.subjects], dtype=np.int8)
    return LabeledMatrix(
        subject_ids=dataset.subject_ids(),
        feature_order=dataset.schema.names(),
        numeric=numeric,
        categorical=categorical,
        y=y,
    )


def restrict_subpopulation(dataset: Dataset, predicate: dict) -> Dataset:
    """Keep subjects matching the predicate; training-side fork only."""
    validate_predicate(predicate, dataset.schema)
    kept = [s for s in dataset.subjects if subject_matches(predicate, s)]
    if not kept:
        raise EmptyResult(
            f"subpopulation predicate matches nobody: {describe_predicate(predicate)}"
        )
    return dataset.with_subjects(kept)


# --------------------------------------------------------------------------
# imputation
# --------------------------------------------------------------------------

IMPUTE_METHODS = ("complete_case", "mean_mode", "indicator")
IMPUTE_MIN_ROWS = 10


@dataclass(frozen=True)
class ImputeStats:
    """Training-frozen fill values, re-applied verbatim to the holdout."""

    method: str
    numeric_fill: dict
    categorical_fill: dict
    indicator_features: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()


def _fill_stats(m: LabeledMatrix) -> tuple[dict, dict, list[str]]:
    warnings = []
    numeric_fill = {}
    for name, col in m.numeric.items():
        observed = col[~np.isnan(col)]
        if observed.size == 0:
            numeric_fill[name] = 0.0
            warnings.append(f"feature {name!r} entirely missing in training; filling 0.0")
        else:
            numeric_fill[name] = float(observed.mean())
    categorical_fill = {}
    for name, col in m.categorical.items():
        counts: dict[str, int] = {}
        for v in col:
            if v is not None:
                counts[v] = counts.get(v, 0) + 1
        if not counts:
            categorical_fill[name] = MISSING_LEVEL
            warnings.append(f"feature {name!r} entirely missing in training; filling "
                            f"{MISSING_LEVEL!r}")
        else:
            top = max(counts.values())
            categorical_fill[name] = min(k for k, v in counts.items() if v == top)
    return numeric_fill, categorical_fill, warnings


def _filled(m: LabeledMatrix, stats: ImputeStats) -> LabeledMatrix:
    numeric = {}
    for name, col in m.numeric.items():
        numeric[name] = np.where(np.isnan(col), stats.numeric_fill.get(name, 0.0), col)
    categorical = {}
    for name, col in m.categorical.items():
        fill = stats.categorical_fill.get(name, MISSING_LEVEL)
        out = col.copy()
        out[[v is None for v in col]] = fill
        categorical[name] = out
    return replace(m, numeric=numeric, categorical=categorical)


def _with_indicators(m: LabeledMatrix, miss_masks: dict, features: tuple[str, ...]) -> LabeledMatrix:
    numeric = dict(m.numeric)
    order = list(m.feature_order)
    for name in features:
        col_name = f"{name}__missing"
        numeric[col_name] = miss_masks[name].astype(float)
        order.append(col_name)
    return replace(m, numeric=numeric, feature_order=tuple(order))


def _missing_masks(m: LabeledMatrix) -> dict:
    masks = {}
    for name in m.feature_order:
        if name in m.numeric:
            masks[name] = np.isnan(m.numeric[name])
        elif name in m.categorical:
            masks[name] = np.array([v is None for v in m.categorical[name]], dtype=bool)
    return masks


def impute(m: LabeledMatrix, method: str, min_rows: int = IMPUTE_MIN_ROWS) -> tuple[LabeledMatrix, ImputeStats]:
    """Handle missing values on the training matrix; freeze the statistics.

    complete_case drops training rows with any missing value (the frozen
    mean/mode still applies to holdout rows, which can never be dropped);
    mean_mode fills numeric with the training mean and categoricals with the
    training mode; indicator additionally appends one 0/1 missing-indicator
    column per training-affected feature.
    """
    if method not in IMPUTE_METHODS:
        raise ValueError(f"unknown imputation method {method!r}")
    masks = _missing_masks(m)
    if method == "complete_case":
        any_missing = np.zeros(m.n, dtype=bool)
        for mask in masks.values():
            any_missing |= mask
        keep = np.nonzero(~any_missing)[0]
        if keep.size < min_rows:
            raise AllRowsDropped(
                f"complete_case retains {keep.size} rows (< {min_rows})"
            )
        kept = m.take(keep)
        numeric_fill, categorical_fill, warnings = _fill_stats(kept)
        return kept, ImputeStats("complete_case", numeric_fill, categorical_fill,
                                 warnings=tuple(warnings))
    numeric_fill, categorical_fill, warnings = _fill_stats(m)
    if method == "mean_mode":
        stats = ImputeStats("mean_mode", numeric_fill, categorical_fill,
                            warnings=tuple(warnings))
        return _filled(m, stats), stats
    affected = tuple(name for name in m.feature_order if masks.get(name, np.zeros(0)).any())
    stats = ImputeStats("indicator", numeric_fill, categorical_fill, affected,
                        tuple(warnings))
    filled = _filled(m, stats)
    return _with_indicators(filled, masks, affected), stats


def apply_impute(m: LabeledMatrix, stats: ImputeStats) -> LabeledMatrix:
    """Apply frozen imputation statistics to holdout rows (never drops)."""
    masks = _missing_masks(m)
    filled = _filled(m, stats)
    if stats.method == "indicator":
        filled = _with_indicators(filled, masks, stats.indicator_features)
    return filled


# --------------------------------------------------------------------------
# rare-level grouping
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RareGrouping:
    merges: dict  # feature -> {level: OTHER_LEVEL}
    warnings: tuple[str, ...] = ()


def group_rare(m: LabeledMatrix, threshold: float) -> tuple[LabeledMatrix, RareGrouping]:
    """Merge rare categorical levels into a single OTHER level.

    All levels with training frequency below the threshold merge into OTHER;
    if the pooled OTHER level itself still falls below the threshold, the
    smallest remaining levels are folded in (smallest first, ties broken by
    level name) until OTHER clears it or nothing else remains. Frequencies
    are over non-missing training values. The merge maps are frozen so the
    same folding applies to the holdout.
    """
    if not 0 <= threshold < 1:
        raise ValueError(f"threshold must be in [0,1), got {threshold}")
    merges: dict[str, dict] = {}
    warnings: list[str] = []
    if threshold == 0:
        return m, RareGrouping(merges)
    categorical = dict(m.categorical)
    for name, col in m.categorical.items():
        values = [v for v in col if v is not None]
        if not values:
            continue
        total = len(values)
        counts: dict[str, int] = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        merged = {lev for lev, c in counts.items() if c / total < threshold}
        remaining = sorted(set(counts) - merged, key=lambda lev: (counts[lev], lev))
        other_mass = sum(counts[lev] for lev in merged)
        # fold smallest surviving levels until OTHER clears the threshold,
        # but never collapse the final surviving level into OTHER
        while merged and other_mass / total < threshold and len(remaining) >= 2:
            lev = remaining.pop(0)
            merged.add(lev)
            other_mass += counts[lev]
        if not merged:
            continue
        if len(merged) == len(counts):
            warnings.append(
                f"feature {name!r}: every level fell below threshold {threshold:g}; "
                "collapsed to a single OTHER level"
            )
        merges[name] = {lev: OTHER_LEVEL for lev in sorted(merged)}
        out = col.copy()
        for i, v in enumerate(col):
            if v in merged:
                out[i] = OTHER_LEVEL
        categorical[name] = out
    return replace(m, categorical=categorical), RareGrouping(merges, tuple(warnings))


def apply_group_rare(m: LabeledMatrix, merges: dict) -> LabeledMatrix:
    if not merges:
        return m
    categorical = dict(m.categorical)
    for name, mapping in merges.items():
        col = categorical[name].copy()
        for i, v in enumerate(col):
            if v in mapping:
                col[i] = OTHER_LEVEL
        categorical[name] = col
    return replace(m, categorical=categorical)


# --------------------------------------------------------------------------
# resampling
# --------------------------------------------------------------------------

RESAMPLE_METHODS = ("none", "oversample_minority", "undersample_majority")


def resample(m: LabeledMatrix, method: str, target_rate: float, seed: int) -> LabeledMatrix:
    """Push the training base rate up to target_rate; training split only."""
    if method not in RESAMPLE_METHODS:
        raise ValueError(f"unknown resampling method {method!r}")
    if method == "none" or m.base_rate >= target_rate:
        return m
    pos_idx = np.nonzero(m.y == 1)[0]
    neg_idx = np.nonzero(m.y == 0)[0]
    if pos_idx.size == 0:
        raise EmptyMinority("no positive examples to resample toward the target rate")
    rng = np.random.default_rng(derive_seed(seed, "resample"))
    if method == "oversample_minority":
        n, pos = m.n, pos_idx.size
        extra = int(np.ceil((target_rate * n - pos) / (1.0 - target_rate)))
        draws = rng.integers(0, pos_idx.size, size=extra)
        idx = np.concatenate([np.arange(n), pos_idx[draws]])
        return m.take(idx)
    # undersample_majority: keep all positives, thin negatives
    keep_neg = int(np.floor(pos_idx.size * (1.0 - target_rate) / target_rate))
    keep_neg = min(keep_neg, neg_idx.size)
    chosen = rng.permutation(neg_idx.size)[:keep_neg]
    idx = np.sort(np.concatenate([pos_idx, neg_idx[chosen]]))
    return m.take(idx)


# --------------------------------------------------------------------------
# one-hot encoding
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodingMap:
    """Training-frozen design layout: column order, per-feature levels,
    reference level (dropped, most frequent in training)."""

    column_names: tuple[str, ...]
    references: dict  # categorical feature -> reference level
    level_columns: dict  # categorical feature -> tuple of levels with a column


def encode(m: LabeledMatrix) -> tuple[np.ndarray, EncodingMap]:
    """One-hot encode categoricals (reference level dropped); numeric as-is."""
    columns: list[np.ndarray] = []
    names: list[str] = []
    references: dict[str, str] = {}
    level_columns: dict[str, tuple] = {}
    for name in m.feature_order:
        if name in m.numeric:
            col = m.numeric[name]
            if np.isnan(col).any():
                raise SchemaMismatch(f"numeric feature {name!r} still has missing values")
            columns.append(col.astype(float))
            names.append(name)
        else:
            col = m.categorical[name]
            if any(v is None for v in col):
                raise SchemaMismatch(f"categorical feature {name!r} still has missing values")
            counts: dict[str, int] = {}
            for v in col:
                counts[v] = counts.get(v, 0) + 1
            top = max(counts.values())
            reference = min(k for k, v in counts.items() if v == top)
            references[name] = reference
            levels = tuple(lev for lev in sorted(counts) if lev != reference)
            level_columns[name] = levels
            for lev in levels:
                columns.append((col == lev).astype(float))
                names.append(f"{name}={lev}")
    X = np.column_stack(columns) if columns else np.empty((m.n, 0))
    return X, EncodingMap(tuple(names), references, level_columns)


def apply_encoding(m: LabeledMatrix, enc: EncodingMap) -> tuple[np.ndarray, tuple[str, ...]]:
    """Build the holdout design under the frozen layout.

    Unseen categorical levels map to OTHER when the training design has an
    OTHER column (or reference) for that feature, else to the reference
    level; either way a warning is recorded.
    """
    columns: list[np.ndarray] = []
    warnings: list[str] = []
    by_feature: dict[str, np.ndarray] = {}
    for name, levels in enc.level_columns.items():
        col = m.categorical.get(name)
        if col is None:
            raise SchemaMismatch(f"holdout is missing categorical feature {name!r}")
        known = set(levels) | {enc.references[name]}
        unseen = sorted({v for v in col if v not in known})
        if unseen:
            target = OTHER_LEVEL if OTHER_LEVEL in known else enc.references[name]
            warnings.append(
                f"feature {name!r}: unseen level(s) {unseen} mapped to {target!r}"
            )
            col = np.array([target if v in unseen else v for v in col], dtype=object)
        by_feature[name] = col
    for col_name in enc.column_names:
        if "=" in col_name:
            feat, lev = col_name.split("=", 1)
            columns.append((by_feature[feat] == lev).astype(float))
        else:
            col = m.numeric.get(col_name)
            if col is None:
                raise SchemaMismatch(f"holdout is missing numeric column {col_name!r}")
            if np.isnan(col).any():
                raise SchemaMismatch(f"holdout column {col_name!r} still has missing values")
            columns.append(col.astype(float))
    X = np.column_stack(columns) if columns else np.empty((m.n, 0))
    return X, tuple(warnings)


# --------------------------------------------------------------------------
# variable selection
# --------------------------------------------------------------------------

SELECTION_METHODS = ("none", "forward_stepwise", "bootstrap_stability", "l1_path")
STEPWISE_PENALTY = 2.0  # information-criterion-style cost per added parameter


@dataclass(frozen=True)
class SelectionResult:
    columns: tuple[str, ...]
    indices: tuple[int, ...]
    intercept_only: bool = False
    frequencies: dict | None = None
    warnings: tuple[str, ...] = ()


def _stepwise_indices(X: np.ndarray, y: np.ndarray, penalty: float) -> list[int]:
    n, p = X.shape
    selected: list[int] = []
    fit = _models.fit_logistic(np.empty((n, 0)), y, l2=1e-8)
    best_score = fit.deviance + penalty * 1.0
    current = np.array([fit.intercept])
    while True:
        best_gain, best_j, best_dev, best_beta = 0.0, None, None, None
        warm = np.append(current, 0.0)
        for j in range(p):
            if j in selected:
                continue
            cols = selected + [j]
            cand = _models.fit_logistic(X[:, cols], y, l2=1e-8, tol=1e-6, init=warm)
            score = cand.deviance + penalty * (len(cols) + 1.0)
            gain = best_score - score
            if gain > best_gain + 1e-10:
                best_gain, best_j, best_dev = gain, j, score
                best_beta = np.concatenate([[cand.intercept], cand.coef])
        if best_j is None:
            return selected
        selected.append(best_j)
        best_score = best_dev
        current = best_beta


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _l1_logistic_indices(X: np.ndarray, y: np.ndarray, penalty: float,
                         max_iter: int = 500) -> list[int]:
    """FISTA on standardized columns; intercept unpenalized."""
    n, p = X.shape
    mu, sd = X.mean(axis=0), X.std(axis=0)
    usable = sd > 0
    Z = np.zeros_like(X)
    Z[:, usable] = (X[:, usable] - mu[usable]) / sd[usable]
    # Lipschitz bound via power iteration on Z'Z / (4n)
    v = np.ones(p) / max(np.sqrt(p), 1.0)
    for _ in range(30):
        w = Z.T @ (Z @ v)
        norm = np.linalg.norm(w)
        if norm == 0:
            break
        v = w / norm
    L = max(norm / (4.0 * n), 1e-12) * 1.1
    beta = np.zeros(p)
    b0 = 0.0
    zb, zb0, t_k = beta.copy(), b0, 1.0
    for _ in range(max_iter):
        eta = zb0 + Z @ zb
        pvec = 1.0 / (1.0 + np.exp(-eta))
        grad = Z.T @ (pvec - y) / n
        grad0 = float(np.mean(pvec - y))
        new_beta = _soft_threshold(zb - grad / L, penalty / L)
        new_b0 = zb0 - grad0 / L
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        zb = new_beta + ((t_k - 1.0) / t_next) * (new_beta - beta)
        zb0 = new_b0 + ((t_k - 1.0) / t_next) * (new_b0 - b0)
        shift = np.max(np.abs(new_beta - beta)) if p else 0.0
        beta, b0, t_k = new_beta, new_b0, t_next
        if shift < 1e-10:
            break
    return [int(j) for j in np.nonzero(np.abs(beta) > 1e-8)[0]]


def select_variables(
    X: np.ndarray,
    y: np.ndarray,
    column_names: tuple[str, ...],
    method: str,
    params: dict | None = None,
    seed: int = 0,
) -> SelectionResult:
    """Pick the design columns the model may use.

    none keeps everything; forward_stepwise greedily adds columns while the
    penalized deviance improves; bootstrap_stability reruns the stepwise on B
    seeded bootstrap resamples and keeps columns chosen in at least pi*B of
    them; l1_path keeps columns with nonzero coefficients in an L1-penalized
    logistic fit. An empty selection degrades to an intercept-only flag.
    """
    params = dict(params or {})
    if method not in SELECTION_METHODS:
        raise ValueError(f"unknown selection method {method!r}")
    if X.shape[1] == 0:
        raise DegenerateDesign("no candidate columns to select from")
    warnings: list[str] = []
    frequencies = None
    y = np.asarray(y, dtype=float)

    if method == "none":
        indices = list(range(X.shape[1]))
    elif method == "forward_stepwise":
        indices = sorted(_stepwise_indices(X, y, float(params.get("penalty", STEPWISE_PENALTY))))
    elif method == "l1_path":
        indices = _l1_logistic_indices(X, y, float(params.get("penalty", 0.05)))
    else:
        B = int(params.get("B", 100))
        pi = float(params.get("pi", 0.8))
        if B < 10:
            raise ValueError("bootstrap_stability needs B >= 10 replicates")
        if not 0 < pi <= 1:
            raise ValueError("bootstrap_stability needs inclusion threshold pi in (0,1]")
        penalty = float(params.get("penalty", STEPWISE_PENALTY))
        rng = np.random.default_rng(derive_seed(seed, "bootstrap_select"))
        counts = np.zeros(X.shape[1])
        for _ in range(B):
            rows = rng.integers(0, X.shape[0], size=X.shape[0])
            yb = y[rows]
            if yb.min() == yb.max():
                warnings.append("bootstrap replicate was single-class; skipped")
                continue
            for j in _stepwise_indices(X[rows], yb, penalty):
                counts[j] += 1
        frequencies = {column_names[j]: counts[j] / B for j in range(X.shape[1])}
        indices = sorted(int(j) for j in np.nonzero(counts >= pi * B - 1e-9)[0])

    if not indices:
        warnings.append("selection kept no columns; intercept-only model")
        return SelectionResult((), (), intercept_only=True, frequencies=frequencies,
                               warnings=tuple(warnings))
    sub = X[:, indices]
    if np.all(sub == sub[0:1, :]):
        raise DegenerateDesign("every selected column is constant")
    return SelectionResult(
        columns=tuple(column_names[j] for j in indices),
        indices=tuple(indices),
        frequencies=frequencies,
        warnings=tuple(warnings),
    )
