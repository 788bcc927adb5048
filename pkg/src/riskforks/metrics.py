"""Per-path performance, calibration, fairness, and budget-constrained metrics.

AUC is the exact pairwise statistic (ties credited 0.5) computed via
midranks in O(n log n). Lift@k is precision in the top budget fraction over
the base rate, with cutoff ties broken by ascending subject id and the tie
count recorded. The fairness report carries the three quantities whose joint
satisfaction is impossible under unequal base rates (calibration within
groups, balance for the positive class, balance for the negative class).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from riskforks.data import MIN_GROUP_SIZE
from riskforks.errors import NoPositives, SingleClassError

ECE_BINS = 10


def _as_arrays(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.shape != y.shape or s.ndim != 1 or s.size == 0:
        raise ValueError("scores and labels must be equal-length non-empty vectors")
    return s, y


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """P(random positive ranks above random negative), ties credited 0.5."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs both classes present")
    ranks = _midranks(s)
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def brier(scores, labels) -> float:
    s, y = _as_arrays(scores, labels)
    return float(np.mean((s - y) ** 2))


def ece(scores, labels, n_bins: int = ECE_BINS) -> float:
    """Expected calibration error: equal-width bins, bin-mass weighting."""
    s, y = _as_arrays(scores, labels)
    bins = np.clip((s * n_bins).astype(int), 0, n_bins - 1)
    total = 0.0
    for b in range(n_bins):
        mask = bins == b
        if not mask.any():
            continue
        total += mask.mean() * abs(float(s[mask].mean()) - float(y[mask].mean()))
    return total


@dataclass(frozen=True)
class LiftResult:
    value: float
    top_n: int
    cutoff_ties: int  # ranked people tied at the cutoff score (order decided by id)


def lift_detail(scores, labels, budget_fraction: float, subject_ids=None) -> LiftResult:
    s, y = _as_arrays(scores, labels)
    if not 0 < budget_fraction <= 1:
        raise ValueError(f"budget fraction must be in (0,1], got {budget_fraction}")
    base = float(y.mean())
    if base == 0.0:
        raise NoPositives("lift is undefined without positive labels")
    n = s.size
    top_n = int(np.ceil(budget_fraction * n))
    ids = tuple(subject_ids) if subject_ids is not None else tuple(f"{i:09d}" for i in range(n))
    order = sorted(range(n), key=lambda i: (-s[i], ids[i]))
    top = order[:top_n]
    cutoff_score = s[top[-1]]
    n_at_cutoff = int((s == cutoff_score).sum())
    n_taken_at_cutoff = sum(1 for i in top if s[i] == cutoff_score)
    broke_ties = n_at_cutoff > n_taken_at_cutoff
    precision = float(y[top].sum()) / top_n
    return LiftResult(value=precision / base, top_n=top_n,
                      cutoff_ties=n_at_cutoff if broke_ties else 0)


def lift_at(scores, labels, budget_fraction: float, subject_ids=None) -> float:
    """Precision within the top budget fraction, divided by the base rate."""
    return lift_detail(scores, labels, budget_fraction, subject_ids).value


# --------------------------------------------------------------------------
# fairness
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupStats:
    n: int
    base_rate: float
    tpr: float  # NaN when the group has no positives
    fpr: float  # NaN when the group has no negatives
    mean_score_pos: float  # balance for the positive class
    mean_score_neg: float  # balance for the negative class
    ece: float


@dataclass(frozen=True)
class FairnessReport:
    threshold: float
    groups: dict  # group label -> GroupStats
    gaps: dict  # quantity -> max-min over groups with a defined value
    excluded: tuple[str, ...]
    overall_auc: float | None
    warnings: tuple[str, ...] = ()


_GAP_FIELDS = ("base_rate", "tpr", "fpr", "mean_score_pos", "mean_score_neg", "ece")


def fairness_report(scores, labels, groups, threshold: float = 0.5,
                    min_group_size: int = MIN_GROUP_SIZE) -> FairnessReport:
    """Per-group confusion and balance quantities at the given threshold.

    Groups below min_group_size are excluded from the gaps with a warning
    naming them (not fatal). Classification rule: score >= threshold.
    """
    s, y = _as_arrays(scores, labels)
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must be in (0,1), got {threshold}")
    g = np.asarray(list(groups), dtype=object)
    if g.size != s.size:
        raise ValueError("groups must align with scores")
    warnings: list[str] = []
    excluded: list[str] = []
    stats: dict[str, GroupStats] = {}
    for label in sorted(set(g.tolist())):
        mask = g == label
        n = int(mask.sum())
        if n < min_group_size:
            excluded.append(label)
            warnings.append(f"group {label!r} has {n} members (< {min_group_size}); excluded")
            continue
        ys, ss = y[mask], s[mask]
        decided = ss >= threshold
        pos, neg = ys == 1, ys == 0
        stats[label] = GroupStats(
            n=n,
            base_rate=float(ys.mean()),
            tpr=float(decided[pos].mean()) if pos.any() else float("nan"),
            fpr=float(decided[neg].mean()) if neg.any() else float("nan"),
            mean_score_pos=float(ss[pos].mean()) if pos.any() else float("nan"),
            mean_score_neg=float(ss[neg].mean()) if neg.any() else float("nan"),
            ece=ece(ss, ys),
        )
    gaps = {}
    for quantity in _GAP_FIELDS:
        values = [getattr(st, quantity) for st in stats.values()]
        values = [v for v in values if v == v]
        gaps[quantity] = max(values) - min(values) if len(values) >= 2 else 0.0
    try:
        overall = auc(s, y)
    except SingleClassError:
        overall = None
    return FairnessReport(threshold, stats, gaps, tuple(excluded), overall, tuple(warnings))


@dataclass(frozen=True)
class ImpossibilityFinding:
    applicable: bool
    reason: str
    calibrated_within_tolerance: bool
    base_rate_gap: float
    balance_pos_gap: float
    balance_neg_gap: float
    violated: tuple[str, ...]
    all_three_hold: bool


def impossibility_check(report: FairnessReport, tolerance: float = 0.01) -> ImpossibilityFinding:
    """Diagnose which of {calibration, balance+, balance-} gives way.

    Under unequal base rates, a calibrated-but-imperfect scorer must violate
    balance for the positive or negative class; only equal base rates or
    perfect risk assignment can satisfy all three at once.
    """
    gaps = report.gaps
    base_gap = gaps.get("base_rate", 0.0)
    max_ece = max((st.ece for st in report.groups.values()), default=float("nan"))
    calibrated = max_ece == max_ece and max_ece <= tolerance
    pos_gap, neg_gap = gaps.get("mean_score_pos", 0.0), gaps.get("mean_score_neg", 0.0)
    violated = []
    if not calibrated:
        violated.append("calibration")
    if pos_gap > tolerance:
        violated.append("balance_for_positive_class")
    if neg_gap > tolerance:
        violated.append("balance_for_negative_class")
    all_three = not violated
    if len(report.groups) < 2 or base_gap <= tolerance:
        return ImpossibilityFinding(
            applicable=False,
            reason="base rates equal within tolerance; joint satisfaction is possible",
            calibrated_within_tolerance=calibrated,
            base_rate_gap=base_gap,
            balance_pos_gap=pos_gap,
            balance_neg_gap=neg_gap,
            violated=tuple(violated),
            all_three_hold=all_three,
        )
    imperfect = report.overall_auc is not None and report.overall_auc < 1.0
    reason = (
        "unequal base rates with calibrated, imperfect scores force a balance violation"
        if calibrated and imperfect
        else "unequal base rates; reporting which criteria give way"
    )
    return ImpossibilityFinding(
        applicable=True,
        reason=reason,
        calibrated_within_tolerance=calibrated,
        base_rate_gap=base_gap,
        balance_pos_gap=pos_gap,
        balance_neg_gap=neg_gap,
        violated=tuple(violated),
        all_three_hold=all_three,
    )


# --------------------------------------------------------------------------
# ROC crossing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RocCrossing:
    crosses: bool
    first_crossing_fpr: tuple[float, float] | None  # FPR interval bracketing it


def _roc_points(scores: np.ndarray, labels: np.ndarray):
    order = np.argsort(-scores, kind="stable")
    y = labels[order]
    s = scores[order]
    distinct = np.nonzero(np.diff(s))[0]
    idx = np.concatenate([distinct, [y.size - 1]])
    tp = np.cumsum(y)[idx]
    fp = (idx + 1) - tp
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    return fpr, tpr


def _tpr_at(fpr_grid: np.ndarray, fpr: np.ndarray, tpr: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(fpr, fpr_grid, side="right") - 1
    return tpr[np.clip(idx, 0, tpr.size - 1)]


def roc_crossing(scores_a, scores_b, labels) -> RocCrossing:
    """Do the two ROC step functions cross on the shared label set?"""
    sa, y = _as_arrays(scores_a, labels)
    sb, _ = _as_arrays(scores_b, labels)
    if y.min() == y.max():
        raise SingleClassError("ROC comparison needs both classes present")
    fa, ta = _roc_points(sa, y)
    fb, tb = _roc_points(sb, y)
    grid = np.unique(np.concatenate([fa, fb]))
    diff = _tpr_at(grid, fa, ta) - _tpr_at(grid, fb, tb)
    signs = np.sign(diff)
    nonzero = signs[signs != 0]
    if nonzero.size == 0 or (nonzero == nonzero[0]).all():
        return RocCrossing(False, None)
    first_pos = None
    prev_sign, prev_fpr = 0.0, 0.0
    for f, sgn in zip(grid, signs):
        if sgn != 0 and prev_sign != 0 and sgn != prev_sign:
            first_pos = (float(prev_fpr), float(f))
            break
        if sgn != 0:
            prev_sign, prev_fpr = sgn, f
    return RocCrossing(True, first_pos)


# --------------------------------------------------------------------------
# per-path bundle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PathMetrics:
    auc: float
    brier: float
    ece: float
    lifts: dict  # budget fraction -> lift value
    lift_ties: dict  # budget fraction -> cutoff tie count
    fairness: FairnessReport
    warnings: tuple[str, ...] = ()

    def scalar(self, name: str) -> float:
        if name == "auc":
            return self.auc
        if name == "brier":
            return self.brier
        if name == "ece":
            return self.ece
        if name.startswith("lift@"):
            return self.lifts[float(name.split("@", 1)[1])]
        raise KeyError(f"unknown metric {name!r}")


#: orientation of each admissibility metric: True = higher is better
HIGHER_IS_BETTER = {"auc": True, "brier": False, "ece": False, "lift": True}


def metric_orientation(name: str) -> bool:
    key = name.split("@", 1)[0]
    if key not in HIGHER_IS_BETTER:
        raise KeyError(f"unknown metric {name!r}")
    return HIGHER_IS_BETTER[key]


def compute_path_metrics(scores, labels, groups, subject_ids, budgets,
                         fairness_threshold: float = 0.5,
                         min_group_size: int = MIN_GROUP_SIZE) -> PathMetrics:
    s, y = _as_arrays(scores, labels)
    warnings: list[str] = []
    lifts, ties = {}, {}
    for k in budgets:
        try:
            detail = lift_detail(s, y, k, subject_ids)
            lifts[k] = detail.value
            ties[k] = detail.cutoff_ties
            if detail.cutoff_ties:
                warnings.append(
                    f"lift@{k:g}: {detail.cutoff_ties} subjects tied at the cutoff score"
                )
        except NoPositives:
            lifts[k] = float("nan")
            ties[k] = 0
            warnings.append(f"lift@{k:g} undefined: holdout has no positives")
    report = fairness_report(s, y, groups, fairness_threshold, min_group_size)
    warnings.extend(report.warnings)
    return PathMetrics(
        auc=auc(s, y),
        brier=brier(s, y),
        ece=ece(s, y),
        lifts=lifts,
        lift_ties=ties,
        fairness=report,
        warnings=tuple(warnings),
    )
