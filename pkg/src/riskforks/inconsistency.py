"""Per-subject aggregation of scores across admissible paths.

The score matrix is the synchronization point of the whole run: workers
produce (path_id, column) pairs in any order and the matrix assembles them in
canonical path order, so downstream statistics are independent of execution
order. Profiles summarize each subject's score distribution and risk-bin
behavior; multiplicity metrics compare thresholded decisions against a
declared baseline path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from riskforks.errors import (
    AllPathsFailed,
    BaselineNotAdmissible,
    EmptyRashomonSet,
    UnknownSubject,
)
from riskforks.metrics import metric_orientation


@dataclass(frozen=True)
class BinningScheme:
    """Ordinal risk categories over (0,1): cuts ascending, one label per bin.

    Bins are half-open [cut_k, cut_{k+1}) with the top bin closed; a score
    exactly at a cut belongs to the upper bin.
    """

    name: str
    cuts: tuple[float, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if list(self.cuts) != sorted(set(self.cuts)):
            raise ValueError(f"scheme {self.name!r}: cuts must be strictly ascending")
        if any(not 0 < c < 1 for c in self.cuts):
            raise ValueError(f"scheme {self.name!r}: cuts must lie in (0,1)")
        if len(self.labels) != len(self.cuts) + 1:
            raise ValueError(f"scheme {self.name!r}: need #cuts+1 labels")

    @property
    def n_bins(self) -> int:
        return len(self.labels)


def equal_width_scheme(name: str, n_bins: int, labels=None) -> BinningScheme:
    cuts = tuple(k / n_bins for k in range(1, n_bins))
    labels = tuple(labels) if labels else tuple(f"bin{k+1}of{n_bins}" for k in range(n_bins))
    return BinningScheme(name, cuts, labels)


def bin_index(score: float, scheme: BinningScheme) -> int:
    if not 0 < score < 1:
        raise ValueError(f"score must be in (0,1), got {score}")
    lo, hi = 0, len(scheme.cuts)
    while lo < hi:
        mid = (lo + hi) // 2
        if score >= scheme.cuts[mid]:
            lo = mid + 1
        else:
            hi = mid
    return lo


def bin_scores(score: float, scheme: BinningScheme) -> str:
    """Label of the bin containing the score (upper bin at exact cuts)."""
    return scheme.labels[bin_index(score, scheme)]


def _ordinal_position(index: int, n_bins: int) -> float:
    if n_bins == 1:
        return 0.5
    return index / (n_bins - 1)


@dataclass(frozen=True)
class BinDisagreement:
    label_a: str
    label_b: str
    position_a: float  # ordinal position normalized to [0,1]
    position_b: float
    flagged: bool  # positions differ by more than one normalized bin-width


def bin_disagreement(score: float, scheme_a: BinningScheme, scheme_b: BinningScheme) -> BinDisagreement:
    """Gordon-style categorical disagreement between two schemes.

    Ordinal positions are bin_index/(n_bins-1); "one bin-width" is the finer
    scheme's normalized width min(1/n_a, 1/n_b). The flag is set when the two
    readings of the same score differ by more than that width.
    """
    ia, ib = bin_index(score, scheme_a), bin_index(score, scheme_b)
    pa = _ordinal_position(ia, scheme_a.n_bins)
    pb = _ordinal_position(ib, scheme_b.n_bins)
    width = min(1.0 / scheme_a.n_bins, 1.0 / scheme_b.n_bins)
    return BinDisagreement(
        label_a=scheme_a.labels[ia],
        label_b=scheme_b.labels[ib],
        position_a=pa,
        position_b=pb,
        flagged=abs(pa - pb) > width,
    )


# --------------------------------------------------------------------------
# score matrix
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PathFailure:
    path_id: int
    reason: str


@dataclass(frozen=True)
class ScoreMatrix:
    """Holdout subjects x completed paths, probabilities strictly in (0,1).

    Failed paths are carried as explicit failure records, never silently
    dropped. Columns follow canonical path order.
    """

    subject_ids: tuple[str, ...]
    path_ids: tuple[int, ...]
    scores: np.ndarray  # shape (n_subjects, n_paths)
    failures: tuple[PathFailure, ...] = ()

    def __post_init__(self):
        if self.scores.shape != (len(self.subject_ids), len(self.path_ids)):
            raise ValueError("score matrix shape does not match subjects x paths")

    def column(self, path_id: int) -> np.ndarray:
        try:
            j = self.path_ids.index(path_id)
        except ValueError:
            raise BaselineNotAdmissible(f"path {path_id} is not an admissible column")
        return self.scores[:, j]

    def row(self, subject_id: str) -> np.ndarray:
        try:
            i = self.subject_ids.index(subject_id)
        except ValueError:
            raise UnknownSubject(f"subject {subject_id!r} is not in the holdout")
        return self.scores[i, :]


def build_score_matrix(subject_ids, canonical_path_ids, columns: dict,
                       failures: dict | None = None) -> ScoreMatrix:
    """Assemble columns (however they were produced) in canonical path order.

    columns maps path_id -> score vector; failures maps path_id -> reason.
    Every canonical path must appear in exactly one of the two maps.
    """
    failures = failures or {}
    ok_ids = [pid for pid in canonical_path_ids if pid in columns]
    missing = [pid for pid in canonical_path_ids if pid not in columns and pid not in failures]
    if missing:
        raise ValueError(f"paths missing both a score column and a failure record: {missing}")
    if not ok_ids:
        raise AllPathsFailed(
            "every path failed: " + "; ".join(f"{pid}: {failures[pid]}" for pid in failures)
        )
    n = len(subject_ids)
    scores = np.empty((n, len(ok_ids)))
    for j, pid in enumerate(ok_ids):
        col = np.asarray(columns[pid], dtype=float)
        if col.shape != (n,):
            raise ValueError(f"path {pid}: column has shape {col.shape}, expected ({n},)")
        scores[:, j] = col
    fail_records = tuple(
        PathFailure(pid, failures[pid]) for pid in canonical_path_ids if pid in failures
    )
    return ScoreMatrix(tuple(subject_ids), tuple(ok_ids), scores, fail_records)


# --------------------------------------------------------------------------
# Rashomon filtering
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RashomonRule:
    metric: str
    mode: str  # "absolute" | "relative"
    value: float  # threshold (absolute) or epsilon slack off the best (relative)

    def __post_init__(self):
        if self.mode not in ("absolute", "relative"):
            raise ValueError(f"unknown rashomon mode {self.mode!r}")
        metric_orientation(self.metric)  # validates the metric name


def rashomon_filter(matrix: ScoreMatrix, metric_values: dict, rule: RashomonRule):
    """Keep paths meeting the rule; returns (sub-matrix, per-path decision).

    For higher-is-better metrics, absolute mode keeps metric >= threshold and
    relative mode keeps metric >= best - epsilon; orientations flip for
    lower-is-better metrics (brier, ece).
    """
    higher = metric_orientation(rule.metric)
    values = {pid: metric_values[pid] for pid in matrix.path_ids}
    finite = [v for v in values.values() if v == v]
    if not finite:
        raise EmptyRashomonSet("no finite metric values to filter on")
    if rule.mode == "absolute":
        cut = rule.value
    else:
        best = max(finite) if higher else min(finite)
        cut = best - rule.value if higher else best + rule.value
    decisions = {}
    for pid, v in values.items():
        if v != v:
            decisions[pid] = False
        else:
            decisions[pid] = bool(v >= cut - 1e-12 if higher else v <= cut + 1e-12)
    keep = [j for j, pid in enumerate(matrix.path_ids) if decisions[pid]]
    if not keep:
        raise EmptyRashomonSet(
            f"rule {rule.metric} {rule.mode} {rule.value} admits no path"
        )
    sub = ScoreMatrix(
        subject_ids=matrix.subject_ids,
        path_ids=tuple(matrix.path_ids[j] for j in keep),
        scores=matrix.scores[:, keep],
        failures=matrix.failures,
    )
    return sub, decisions


# --------------------------------------------------------------------------
# profiles and multiplicity
# --------------------------------------------------------------------------

DEFAULT_ABSTAIN_RANGE = 0.30
DEFAULT_ABSTAIN_FLIP = 0.25


@dataclass(frozen=True)
class SchemeProfile:
    scheme: str
    distribution: dict  # bin label -> path count
    modal_bin: str
    flip_rate: float  # share of paths disagreeing with the modal bin
    entropy: float  # normalized to [0,1] by log(#bins)


@dataclass(frozen=True)
class InconsistencyProfile:
    subject_id: str
    n_paths: int
    score_min: float
    score_max: float
    score_range: float
    score_sd: float
    schemes: tuple[SchemeProfile, ...]
    abstain: bool
    ambiguous: bool | None = None  # decision flippable vs baseline; None if no baseline


def _scheme_profile(row: np.ndarray, scheme: BinningScheme) -> SchemeProfile:
    indices = [bin_index(float(s), scheme) for s in row]
    counts = np.bincount(indices, minlength=scheme.n_bins)
    modal_idx = int(np.argmax(counts))  # ties resolve to the lowest bin
    n = len(indices)
    probs = counts[counts > 0] / n
    if scheme.n_bins > 1:
        entropy = float(-(probs * np.log(probs)).sum() / math.log(scheme.n_bins))
    else:
        entropy = 0.0
    return SchemeProfile(
        scheme=scheme.name,
        distribution={scheme.labels[i]: int(counts[i]) for i in range(scheme.n_bins)},
        modal_bin=scheme.labels[modal_idx],
        flip_rate=float(1.0 - counts[modal_idx] / n),
        entropy=float(min(max(entropy, 0.0), 1.0)) + 0.0,
    )


def subject_profiles(
    matrix: ScoreMatrix,
    schemes,
    abstain_range: float = DEFAULT_ABSTAIN_RANGE,
    abstain_flip: float = DEFAULT_ABSTAIN_FLIP,
    baseline_path_id: int | None = None,
    decision_threshold: float = 0.5,
) -> list[InconsistencyProfile]:
    """Distribution statistics per subject over admissible paths.

    The abstain flag implements "too inconsistent to score": score range above
    abstain_range, or modal-bin flip rate above abstain_flip in any scheme.
    Both thresholds are artifact defaults, not values from the literature.
    """
    baseline_col = matrix.column(baseline_path_id) if baseline_path_id is not None else None
    profiles = []
    for i, sid in enumerate(matrix.subject_ids):
        row = matrix.scores[i, :]
        scheme_stats = tuple(_scheme_profile(row, sch) for sch in schemes)
        worst_flip = max((sp.flip_rate for sp in scheme_stats), default=0.0)
        rng_ = float(row.max() - row.min())
        ambiguous = None
        if baseline_col is not None:
            base_decision = baseline_col[i] >= decision_threshold
            ambiguous = bool(((row >= decision_threshold) != base_decision).any())
        profiles.append(
            InconsistencyProfile(
                subject_id=sid,
                n_paths=row.size,
                score_min=float(row.min()),
                score_max=float(row.max()),
                score_range=rng_,
                score_sd=float(row.std()) if rng_ > 0.0 else 0.0,
                schemes=scheme_stats,
                abstain=bool(rng_ > abstain_range or worst_flip > abstain_flip),
                ambiguous=ambiguous,
            )
        )
    return profiles


@dataclass(frozen=True)
class MultiplicityResult:
    ambiguity: float  # share of subjects flippable by >=1 admissible path
    discrepancy: float  # max over paths of the share of decisions flipped
    baseline_path_id: int
    threshold: float


def multiplicity_metrics(matrix: ScoreMatrix, baseline_path_id: int,
                         threshold: float = 0.5) -> MultiplicityResult:
    """Decision-flip metrics against the declared (deployed) baseline path."""
    baseline = matrix.column(baseline_path_id) >= threshold
    decisions = matrix.scores >= threshold
    flips = decisions != baseline[:, None]
    return MultiplicityResult(
        ambiguity=float(flips.any(axis=1).mean()),
        discrepancy=float(flips.mean(axis=0).max()),
        baseline_path_id=baseline_path_id,
        threshold=threshold,
    )
