import numpy as np
import pytest

from riskforks.errors import (
    AllPathsFailed,
    BaselineNotAdmissible,
    EmptyRashomonSet,
    UnknownSubject,
)
from riskforks.inconsistency import (
    BinningScheme,
    RashomonRule,
    ScoreMatrix,
    bin_disagreement,
    bin_index,
    bin_scores,
    build_score_matrix,
    equal_width_scheme,
    multiplicity_metrics,
    rashomon_filter,
    subject_profiles,
)

THREE = BinningScheme("three", (1 / 3, 2 / 3), ("low", "medium", "high"))
FIVE = equal_width_scheme("five", 5)


def exhaustive_multiplicity(scores, baseline_col, threshold):
    """Oracle: enumerate decisions subject by subject, path by path."""
    n, k = scores.shape
    base = scores[:, baseline_col] >= threshold
    ambiguous = 0
    per_path_flips = [0] * k
    for i in range(n):
        any_flip = False
        for j in range(k):
            flip = (scores[i, j] >= threshold) != base[i]
            any_flip = any_flip or flip
            per_path_flips[j] += flip
        ambiguous += any_flip
    return ambiguous / n, max(per_path_flips) / n


# --- binning ------------------------------------------------------------------

def test_bin_scores_examples():
    assert bin_scores(0.55, THREE) == "medium"
    assert bin_scores(0.55, FIVE) == "bin3of5"


def test_bin_exact_cut_goes_to_upper_bin():
    assert bin_scores(1 / 3, THREE) == "medium"
    assert bin_scores(2 / 3, THREE) == "high"
    assert bin_scores(0.2, FIVE) == "bin2of5"


def test_bin_scores_monotone():
    rng = np.random.default_rng(4)
    for _ in range(50):
        cuts = tuple(sorted(set(np.round(rng.uniform(0.05, 0.95, size=rng.integers(1, 6)), 3))))
        scheme = BinningScheme("s", cuts, tuple(str(i) for i in range(len(cuts) + 1)))
        scores = np.sort(rng.uniform(0.001, 0.999, size=30))
        indices = [bin_index(float(s), scheme) for s in scores]
        assert indices == sorted(indices)


def test_gordon_style_disagreement_at_068():
    finding = bin_disagreement(0.68, THREE, FIVE)
    assert finding.label_a == "high"
    assert finding.label_b == "bin4of5"  # 4 of 5, not the top bin
    assert finding.flagged


def test_no_disagreement_at_center():
    finding = bin_disagreement(0.5, THREE, FIVE)
    assert not finding.flagged


def test_disagreement_grid_sweep():
    flagged = [s for s in np.arange(0.001, 1.0, 0.001)
               if bin_disagreement(float(s), THREE, FIVE).flagged]
    assert flagged, "3-bin vs 5-bin must disagree somewhere"
    assert any(abs(s - 0.68) < 1e-9 for s in flagged)


# --- score matrix ---------------------------------------------------------------

def test_build_1x1_matrix():
    m = build_score_matrix(("S1",), [7], {7: np.array([0.5])})
    assert m.scores.shape == (1, 1)
    assert m.path_ids == (7,)


def test_failed_paths_recorded_not_dropped():
    m = build_score_matrix(
        ("S1", "S2"), [1, 2, 3],
        {1: np.array([0.1, 0.2]), 3: np.array([0.3, 0.4])},
        {2: "AllRowsDropped: complete_case retains 4 rows"},
    )
    assert m.path_ids == (1, 3)
    assert len(m.failures) == 1
    assert m.failures[0].path_id == 2
    assert "complete_case" in m.failures[0].reason


def test_all_paths_failed_error():
    with pytest.raises(AllPathsFailed):
        build_score_matrix(("S1",), [1, 2], {}, {1: "boom", 2: "boom"})


def test_merge_order_independent_of_production_order():
    cols = {pid: np.array([pid / 10, pid / 20]) for pid in (5, 1, 9)}
    a = build_score_matrix(("S1", "S2"), [1, 5, 9], dict(sorted(cols.items())))
    b = build_score_matrix(("S1", "S2"), [1, 5, 9], dict(reversed(sorted(cols.items()))))
    assert a.path_ids == b.path_ids == (1, 5, 9)
    assert np.array_equal(a.scores, b.scores)


def test_row_and_column_lookup():
    m = build_score_matrix(("S1", "S2"), [4], {4: np.array([0.25, 0.75])})
    assert m.row("S2").tolist() == [0.75]
    with pytest.raises(UnknownSubject):
        m.row("S9")
    with pytest.raises(BaselineNotAdmissible):
        m.column(5)


# --- rashomon filter -------------------------------------------------------------

def _matrix_with_metrics():
    matrix = build_score_matrix(
        ("S1", "S2"), [1, 2, 3],
        {1: np.array([0.2, 0.8]), 2: np.array([0.3, 0.7]), 3: np.array([0.4, 0.6])},
    )
    return matrix, {1: 0.75, 2: 0.68, 3: 0.72}


def test_rashomon_absolute_auc_threshold():
    matrix, values = _matrix_with_metrics()
    sub, decisions = rashomon_filter(matrix, values, RashomonRule("auc", "absolute", 0.70))
    assert sub.path_ids == (1, 3)
    assert decisions == {1: True, 2: False, 3: True}


def test_rashomon_relative_zero_keeps_best_only():
    matrix, values = _matrix_with_metrics()
    sub, _ = rashomon_filter(matrix, values, RashomonRule("auc", "relative", 0.0))
    assert sub.path_ids == (1,)


def test_rashomon_relative_wide_keeps_all():
    matrix, values = _matrix_with_metrics()
    sub, _ = rashomon_filter(matrix, values, RashomonRule("auc", "relative", 0.5))
    assert sub.path_ids == (1, 2, 3)


def test_rashomon_lower_is_better_metric():
    matrix, _ = _matrix_with_metrics()
    briers = {1: 0.20, 2: 0.10, 3: 0.30}
    sub, _ = rashomon_filter(matrix, briers, RashomonRule("brier", "relative", 0.05))
    assert sub.path_ids == (2,)
    sub2, _ = rashomon_filter(matrix, briers, RashomonRule("brier", "absolute", 0.25))
    assert sub2.path_ids == (1, 2)


def test_rashomon_empty_set_error():
    matrix, values = _matrix_with_metrics()
    with pytest.raises(EmptyRashomonSet):
        rashomon_filter(matrix, values, RashomonRule("auc", "absolute", 0.99))


def test_rashomon_monotone_in_epsilon():
    rng = np.random.default_rng(12)
    matrix = build_score_matrix(
        tuple(f"S{i}" for i in range(10)), list(range(8)),
        {j: rng.uniform(0.05, 0.95, size=10) for j in range(8)},
    )
    values = {j: float(rng.uniform(0.5, 0.9)) for j in range(8)}
    prev_ids: set = set()
    prev_range = np.zeros(10)
    prev_ambiguity = 0.0
    for eps in (0.0, 0.05, 0.1, 0.2, 0.4):
        sub, _ = rashomon_filter(matrix, values, RashomonRule("auc", "relative", eps))
        ids = set(sub.path_ids)
        assert prev_ids <= ids  # enlarging epsilon never drops a path
        ranges = sub.scores.max(axis=1) - sub.scores.min(axis=1)
        assert (ranges >= prev_range - 1e-12).all()
        amb, _ = exhaustive_multiplicity(sub.scores, 0, 0.5)
        assert amb >= prev_ambiguity - 1e-12
        prev_ids, prev_range, prev_ambiguity = ids, ranges, amb


# --- profiles --------------------------------------------------------------------

def test_profile_constant_row():
    matrix = build_score_matrix(("S1",), list(range(5)),
                                {j: np.array([0.42]) for j in range(5)})
    [profile] = subject_profiles(matrix, [THREE])
    assert profile.score_range == 0.0
    assert profile.score_sd == 0.0
    assert profile.schemes[0].entropy == 0.0
    assert profile.schemes[0].flip_rate == 0.0
    assert not profile.abstain


def test_profile_flip_rate_third():
    two_bin = BinningScheme("two", (0.5,), ("low", "high"))
    matrix = build_score_matrix(
        ("S1",), [1, 2, 3],
        {1: np.array([0.40]), 2: np.array([0.60]), 3: np.array([0.45])},
    )
    [profile] = subject_profiles(matrix, [two_bin])
    assert profile.schemes[0].modal_bin == "low"
    assert profile.schemes[0].flip_rate == pytest.approx(1 / 3)


def test_profile_abstain_on_wide_range():
    matrix = build_score_matrix(
        ("S1",), [1, 2], {1: np.array([0.10]), 2: np.array([0.85])}
    )
    [profile] = subject_profiles(matrix, [THREE])
    assert profile.score_range == pytest.approx(0.75)
    assert profile.abstain


def test_profile_abstain_on_flip_rate():
    two_bin = BinningScheme("two", (0.5,), ("low", "high"))
    matrix = build_score_matrix(
        ("S1",), [1, 2, 3, 4],
        {1: np.array([0.45]), 2: np.array([0.55]), 3: np.array([0.45]),
         4: np.array([0.55])},
    )
    [profile] = subject_profiles(matrix, [two_bin], abstain_range=0.5, abstain_flip=0.25)
    assert profile.schemes[0].flip_rate == pytest.approx(0.5)
    assert profile.abstain


def test_profile_ambiguous_flag_vs_baseline():
    matrix = build_score_matrix(
        ("S1", "S2"), [1, 2],
        {1: np.array([0.4, 0.8]), 2: np.array([0.6, 0.9])},
    )
    profiles = subject_profiles(matrix, [THREE], baseline_path_id=1,
                                decision_threshold=0.5)
    assert profiles[0].ambiguous is True
    assert profiles[1].ambiguous is False


def test_profile_entropy_normalized():
    matrix = build_score_matrix(
        ("S1",), [1, 2, 3],
        {1: np.array([0.1]), 2: np.array([0.5]), 3: np.array([0.9])},
    )
    [profile] = subject_profiles(matrix, [THREE])
    assert profile.schemes[0].entropy == pytest.approx(1.0)  # uniform over 3 bins


# --- multiplicity -----------------------------------------------------------------

def test_multiplicity_identical_columns():
    matrix = build_score_matrix(("S1", "S2"), [1, 2],
                                {1: np.array([0.3, 0.7]), 2: np.array([0.3, 0.7])})
    result = multiplicity_metrics(matrix, 1, 0.5)
    assert result.ambiguity == 0.0
    assert result.discrepancy == 0.0


def test_multiplicity_worked_example():
    matrix = build_score_matrix(
        ("S1", "S2", "S3"), [1, 2, 3],
        {1: np.array([0.4, 0.8, 0.2]),
         2: np.array([0.6, 0.9, 0.1]),
         3: np.array([0.45, 0.7, 0.3])},
    )
    result = multiplicity_metrics(matrix, 1, 0.5)
    assert result.ambiguity == pytest.approx(1 / 3)
    assert result.discrepancy == pytest.approx(1 / 3)


def test_multiplicity_baseline_must_be_admissible():
    matrix = build_score_matrix(("S1",), [1], {1: np.array([0.4])})
    with pytest.raises(BaselineNotAdmissible):
        multiplicity_metrics(matrix, 99, 0.5)


def test_multiplicity_matches_exhaustive_enumeration():
    rng = np.random.default_rng(77)
    for _ in range(100):
        n = int(rng.integers(1, 21))
        k = int(rng.integers(1, 21))
        scores = rng.uniform(0.01, 0.99, size=(n, k))
        matrix = build_score_matrix(
            tuple(f"S{i}" for i in range(n)), list(range(k)),
            {j: scores[:, j] for j in range(k)},
        )
        baseline = int(rng.integers(0, k))
        threshold = float(rng.uniform(0.2, 0.8))
        result = multiplicity_metrics(matrix, baseline, threshold)
        amb, disc = exhaustive_multiplicity(scores, baseline, threshold)
        assert result.ambiguity == pytest.approx(amb)
        assert result.discrepancy == pytest.approx(disc)
        assert result.discrepancy <= 1.0
        assert result.ambiguity >= result.discrepancy / k - 1e-12
        assert result.ambiguity >= result.discrepancy - 1e-12  # union bound


def test_permutation_invariance_of_profiles():
    rng = np.random.default_rng(13)
    scores = rng.uniform(0.05, 0.95, size=(6, 7))
    ids = list(range(7))
    m1 = build_score_matrix(tuple(f"S{i}" for i in range(6)), ids,
                            {j: scores[:, j] for j in ids})
    shuffled = dict(reversed([(j, scores[:, j]) for j in ids]))
    m2 = build_score_matrix(tuple(f"S{i}" for i in range(6)), ids, shuffled)
    p1 = subject_profiles(m1, [THREE, FIVE])
    p2 = subject_profiles(m2, [THREE, FIVE])
    assert p1 == p2
