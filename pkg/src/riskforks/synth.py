"""Synthetic populations with a known latent risk model, plus bias injectors.

The generator samples each subject's failure time from a piecewise-constant
baseline hazard scaled by exp(linear predictor of that subject's features and
group). The true failure day lives in a sidecar that is never attached to the
Dataset, so no downstream fork can accidentally train on it.

Injectors reproduce the classic non-sampling errors (noisy labels, selection,
coverage, measurement noise, missingness) on top of a clean population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from riskforks.data import (
    DEGREES,
    EVENT_KINDS,
    JURISDICTIONS,
    Dataset,
    EventRecord,
    FeatureSchema,
    FeatureSpec,
    SubjectRecord,
)
from riskforks.errors import (
    InvalidSpecError,
    NonMonotoneTargets,
    RateOutOfRange,
    UnknownFeatureError,
)
from riskforks.hashing import derive_seed
from riskforks.predicates import subject_matches, validate_predicate


# --------------------------------------------------------------------------
# hazard model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseHazard:
    """Piecewise-constant hazard: rates[k] applies on [knot_{k-1}, knot_k).

    ``knots`` are ascending segment end days; the last rate extends beyond the
    last knot. Rates are per day.
    """

    knots: tuple[int, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        if len(self.knots) != len(self.rates) or not self.rates:
            raise InvalidSpecError("hazard needs one rate per knot and at least one segment")
        if any(k <= 0 for k in self.knots) or list(self.knots) != sorted(set(self.knots)):
            raise InvalidSpecError("hazard knots must be strictly ascending positive days")
        if any(r < 0 for r in self.rates):
            raise InvalidSpecError("hazard rates must be >= 0")

    def cumulative(self, t: np.ndarray) -> np.ndarray:
        """Baseline cumulative hazard H(t)."""
        t = np.asarray(t, dtype=float)
        H = np.zeros_like(t)
        lo = 0.0
        for k, rate in zip(self.knots, self.rates):
            H += rate * np.clip(t - lo, 0.0, k - lo)
            lo = float(k)
        H += self.rates[-1] * np.clip(t - lo, 0.0, None)
        return H

    def invert(self, H: np.ndarray) -> np.ndarray:
        """Inverse of the baseline cumulative hazard; inf where unreachable."""
        H = np.asarray(H, dtype=float)
        t = np.full_like(H, np.inf)
        lo_t, lo_H = 0.0, 0.0
        segments = list(zip(self.knots, self.rates)) + [(math.inf, self.rates[-1])]
        for end, rate in segments:
            seg_H = lo_H + (rate * (end - lo_t) if math.isfinite(end) else math.inf)
            mask = np.isinf(t) & (H > lo_H) & (H <= seg_H)
            if rate > 0:
                t[mask] = lo_t + (H[mask] - lo_H) / rate
            lo_t, lo_H = end, seg_H
            if not math.isfinite(end):
                break
        # H == 0 inverts to 0 (probability-zero edge); unreachable targets stay inf
        t[H == 0] = 0.0 if any(r > 0 for r in self.rates) else np.inf
        return t


def calibrate_hazard(targets: list[tuple[int, float]]) -> PiecewiseHazard:
    """Closed-form piecewise rates hitting cumulative targets at their windows.

    With survival S_k = 1 - rate_k at window w_k, segment k gets
    lambda_k = ln(S_{k-1}/S_k) / (w_k - w_{k-1}). Exact for a homogeneous
    population (everyone at the baseline hazard).
    """
    if not targets:
        raise NonMonotoneTargets("need at least one (window_days, rate) target")
    windows = [int(w) for w, _ in targets]
    rates = [float(r) for _, r in targets]
    if any(not 0 < r < 1 for r in rates):
        raise RateOutOfRange(f"target rates must lie in (0,1): {rates}")
    if windows != sorted(set(windows)) or any(w <= 0 for w in windows):
        raise NonMonotoneTargets(f"windows must be strictly increasing positive days: {windows}")
    if rates != sorted(set(rates)):
        raise NonMonotoneTargets(f"cumulative rates must be strictly increasing: {rates}")
    lam = []
    prev_w, prev_S = 0, 1.0
    for w, r in zip(windows, rates):
        S = 1.0 - r
        lam.append(math.log(prev_S / S) / (w - prev_w))
        prev_w, prev_S = w, S
    return PiecewiseHazard(knots=tuple(windows), rates=tuple(lam))


@dataclass(frozen=True)
class HazardCalibration:
    """Declarative hazard: cumulative-rate targets resolved at generation time.

    mode "baseline": the closed form above (exact when all risk coefficients
    are zero). mode "population": the knot cumulative hazards are solved
    against the sampled hazard multipliers so that the population-average
    survival hits each target in expectation even under heterogeneity.
    """

    targets: tuple[tuple[int, float], ...]
    mode: str = "baseline"

    def __post_init__(self):
        if self.mode not in ("baseline", "population"):
            raise InvalidSpecError(f"unknown calibration mode {self.mode!r}")
        calibrate_hazard(list(self.targets))  # validates monotonicity and ranges


def _solve_knot_hazard(multipliers: np.ndarray, survival: float) -> float:
    """Find H with mean(exp(-H * m)) == survival by bisection."""
    lo, hi = 0.0, 1.0
    while float(np.mean(np.exp(-hi * multipliers))) > survival:
        hi *= 2.0
        if hi > 1e12:
            raise InvalidSpecError("cannot reach target survival; multipliers too small")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.mean(np.exp(-mid * multipliers))) > survival:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _resolve_hazard(spec_hazard, multipliers: np.ndarray) -> PiecewiseHazard:
    if isinstance(spec_hazard, PiecewiseHazard):
        return spec_hazard
    calib: HazardCalibration = spec_hazard
    if calib.mode == "baseline":
        return calibrate_hazard(list(calib.targets))
    knots, H_prev, lam = [], 0.0, []
    prev_w = 0
    for w, r in calib.targets:
        H = _solve_knot_hazard(multipliers, 1.0 - r)
        if H <= H_prev:
            raise NonMonotoneTargets("population calibration produced non-increasing hazard")
        lam.append((H - H_prev) / (w - prev_w))
        knots.append(int(w))
        H_prev, prev_w = H, w
    return PiecewiseHazard(knots=tuple(knots), rates=tuple(lam))


# --------------------------------------------------------------------------
# population spec
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NumericFeature:
    mean: float
    sd: float

    def __post_init__(self):
        if self.sd < 0:
            raise InvalidSpecError("numeric feature sd must be >= 0")


@dataclass(frozen=True)
class CategoricalFeature:
    levels: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.levels) != len(self.probs) or not self.levels:
            raise InvalidSpecError("categorical feature needs matching levels and probs")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise InvalidSpecError("categorical probs must be >= 0 and sum to 1")


@dataclass(frozen=True)
class PriorHistorySpec:
    """Pre-anchor arrest/conviction history so coverage and subpopulation
    predicates have something to bite on."""

    arrests_per_year: float = 0.0
    conviction_prob: float = 0.5
    felony_prob: float = 0.5

    def __post_init__(self):
        if self.arrests_per_year < 0 or not 0 <= self.conviction_prob <= 1:
            raise InvalidSpecError("invalid prior-history parameters")
        if not 0 <= self.felony_prob <= 1:
            raise InvalidSpecError("invalid prior-history parameters")


@dataclass(frozen=True)
class PopulationSpec:
    n: int
    features: tuple[tuple[str, object], ...]  # (name, NumericFeature | CategoricalFeature)
    group_probs: dict
    coefficients: dict = field(default_factory=dict)  # "feat" or "feat=level" -> beta
    group_intercepts: dict = field(default_factory=dict)
    hazard: object = None  # PiecewiseHazard | HazardCalibration
    anchor_day: int = 3650
    priors: PriorHistorySpec | None = None
    failure_event: tuple[str, str, str] = ("conviction", "felony", "in_state")
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidSpecError("population n must be >= 1")
        if not self.group_probs:
            raise InvalidSpecError("population needs at least one group")
        probs = list(self.group_probs.values())
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise InvalidSpecError("group probabilities must be >= 0 and sum to 1")
        if self.hazard is None:
            raise InvalidSpecError("population needs a hazard or calibration targets")
        if self.anchor_day < 0:
            raise InvalidSpecError("anchor_day must be >= 0")
        kind, degree, jur = self.failure_event
        if kind not in EVENT_KINDS or degree not in DEGREES or jur not in JURISDICTIONS:
            raise InvalidSpecError(f"invalid failure_event {self.failure_event!r}")
        names = [name for name, _ in self.features]
        if len(set(names)) != len(names):
            raise InvalidSpecError("duplicate feature names in population spec")
        for key in self.coefficients:
            base = key.split("=", 1)[0]
            if base not in names:
                raise InvalidSpecError(f"coefficient {key!r} references unknown feature")

    def schema(self) -> FeatureSchema:
        specs = []
        for name, gen in self.features:
            if isinstance(gen, NumericFeature):
                specs.append(FeatureSpec(name, "numeric"))
            else:
                specs.append(FeatureSpec(name, "categorical", tuple(gen.levels)))
        return FeatureSchema(tuple(specs))


@dataclass(frozen=True)
class TruthRecord:
    """Latent truth for one subject; deliberately not part of the Dataset."""

    failure_offset: float | None  # days after anchor, None = never fails
    linear_predictor: float


def generate_population(spec: PopulationSpec, seed: int) -> tuple[Dataset, dict]:
    """Sample a population and its latent-truth sidecar, deterministically.

    Returns (dataset, sidecar) where sidecar maps subject_id -> TruthRecord.
    The observed failure event is recorded at day anchor + ceil(offset), so
    P(event day <= anchor + w) equals the continuous-time CDF at integer w.
    """
    rng = np.random.default_rng(derive_seed(seed, "population"))
    n = spec.n
    columns: dict[str, np.ndarray] = {}
    for name, gen in spec.features:
        if isinstance(gen, NumericFeature):
            columns[name] = rng.normal(gen.mean, gen.sd, size=n)
        else:
            columns[name] = rng.choice(np.array(gen.levels, dtype=object), size=n, p=gen.probs)
    group_names = sorted(spec.group_probs)
    groups = rng.choice(
        np.array(group_names, dtype=object), size=n, p=[spec.group_probs[g] for g in group_names]
    )

    eta = np.zeros(n)
    for key, beta in spec.coefficients.items():
        if "=" in key:
            name, level = key.split("=", 1)
            eta += float(beta) * (columns[name] == level).astype(float)
        else:
            eta += float(beta) * columns[key].astype(float)
    for g, b in spec.group_intercepts.items():
        eta += float(b) * (groups == g).astype(float)
    multipliers = np.exp(eta)

    hazard = _resolve_hazard(spec.hazard, multipliers)
    u = rng.random(n)
    target_H = -np.log1p(-u) / multipliers
    offsets = hazard.invert(target_H)

    priors_rng = np.random.default_rng(derive_seed(seed, "priors"))
    prior_counts = np.zeros(n, dtype=int)
    if spec.priors is not None and spec.priors.arrests_per_year > 0 and spec.anchor_day > 0:
        rate = spec.priors.arrests_per_year * spec.anchor_day / 365.0
        prior_counts = priors_rng.poisson(rate, size=n)

    subjects = []
    sidecar: dict[str, TruthRecord] = {}
    width = len(str(n))
    kind, degree, jur = spec.failure_event
    for i in range(n):
        sid = f"S{i:0{width}d}"
        events: list[EventRecord] = []
        for _ in range(prior_counts[i]):
            day = int(priors_rng.integers(0, spec.anchor_day))
            felony = priors_rng.random() < spec.priors.felony_prob
            deg = "felony" if felony else "misdemeanor"
            events.append(EventRecord("arrest", deg, day, "in_state"))
            if priors_rng.random() < spec.priors.conviction_prob:
                events.append(EventRecord("conviction", deg, day, "in_state"))
        offset = offsets[i]
        if np.isfinite(offset):
            day = spec.anchor_day + int(np.ceil(offset))
            events.append(EventRecord(kind, degree, day, jur))
            sidecar[sid] = TruthRecord(float(offset), float(eta[i]))
        else:
            sidecar[sid] = TruthRecord(None, float(eta[i]))
        events.sort(key=lambda e: (e.day, e.event_kind, e.degree))
        features = {name: _native(columns[name][i]) for name, _ in spec.features}
        subjects.append(
            SubjectRecord(sid, str(groups[i]), spec.anchor_day, features, tuple(events))
        )
    provenance = dict(spec.provenance) or {
        "source": "synthetic population generated by riskforks",
        "collection_period": f"days 0..{spec.anchor_day}",
        "known_biases": "none before injection",
    }
    return Dataset(schema=spec.schema(), subjects=tuple(subjects), provenance=provenance), sidecar


def _native(value):
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.str_):
        return str(value)
    return value


# --------------------------------------------------------------------------
# bias injectors
# --------------------------------------------------------------------------

INJECTOR_KINDS = ("label_noise", "selection_bias", "coverage_filter",
                  "measurement_noise", "missingness")


@dataclass(frozen=True)
class BiasInjectorSpec:
    """One non-sampling-error injector.

    kind/params, by kind:
      label_noise        flip_rates: {group: rate}, window_days, per-level
                         confusion optional: confusion_rate (categorical
                         features via level shuffling is intentionally not
                         modeled; see measurement_noise)
      selection_bias     intercept, weights: {feature: coef},
                         group_offsets: {group: coef} on the logit of the
                         inclusion probability
      coverage_filter    predicate: predicate dict (subjects failing it are
                         removed)
      measurement_noise  sds: {numeric feature: sd}
      missingness        feature, mechanism: MCAR|MAR|MNAR, rate,
                         given (MAR conditioning feature), slope
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in INJECTOR_KINDS:
            raise InvalidSpecError(f"unknown injector kind {self.kind!r}")

    def validate(self, schema: FeatureSchema) -> None:
        p = self.params
        if self.kind == "label_noise":
            for g, r in p.get("flip_rates", {}).items():
                if not 0 <= r <= 1:
                    raise RateOutOfRange(f"label_noise rate for group {g!r} out of [0,1]: {r}")
            if p.get("window_days", 3650) <= 0:
                raise InvalidSpecError("label_noise window_days must be positive")
        elif self.kind == "selection_bias":
            for name in p.get("weights", {}):
                if name not in schema:
                    raise UnknownFeatureError(f"selection_bias references unknown feature {name!r}")
        elif self.kind == "coverage_filter":
            validate_predicate(p.get("predicate", {}), schema)
        elif self.kind == "measurement_noise":
            for name, sd in p.get("sds", {}).items():
                if name not in schema or schema[name].kind != "numeric":
                    raise UnknownFeatureError(
                        f"measurement_noise target {name!r} is not a numeric feature"
                    )
                if sd < 0:
                    raise InvalidSpecError(f"noise sd must be >= 0, got {sd}")
        elif self.kind == "missingness":
            name = p.get("feature")
            if name not in schema:
                raise UnknownFeatureError(f"missingness target {name!r} not in schema")
            if p.get("mechanism", "MCAR") not in ("MCAR", "MAR", "MNAR"):
                raise InvalidSpecError(f"unknown missingness mechanism {p.get('mechanism')!r}")
            if not 0 <= p.get("rate", 0.0) <= 1:
                raise RateOutOfRange(f"missingness rate out of [0,1]: {p.get('rate')}")
            if p.get("mechanism") == "MAR":
                given = p.get("given")
                if given not in schema or schema[given].kind != "numeric":
                    raise UnknownFeatureError(
                        "MAR missingness needs a numeric conditioning feature 'given'"
                    )
            if p.get("mechanism") == "MNAR" and schema[name].kind != "numeric":
                raise InvalidSpecError("MNAR (value-dependent) missingness needs a numeric target")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _standardized(values: np.ndarray) -> np.ndarray:
    observed = values[~np.isnan(values)]
    if observed.size == 0:
        return np.zeros_like(values)
    sd = observed.std()
    centered = values - observed.mean()
    return np.where(np.isnan(values), 0.0, centered / sd if sd > 0 else 0.0)


def inject_bias(d: Dataset, spec: BiasInjectorSpec, seed: int) -> Dataset:
    """Apply one injector; the input dataset is never modified."""
    spec.validate(d.schema)
    rng = np.random.default_rng(derive_seed(seed, "inject", spec.kind))
    p = spec.params

    if spec.kind == "coverage_filter":
        kept = [s for s in d.subjects if subject_matches(p["predicate"], s)]
        return d.with_subjects(kept)

    if spec.kind == "selection_bias":
        logits = np.full(d.n, float(p.get("intercept", 0.0)))
        for name, coef in p.get("weights", {}).items():
            col = np.array(
                [s.features.get(name) if s.features.get(name) is not None else np.nan
                 for s in d.subjects],
                dtype=float,
            )
            logits += float(coef) * np.where(np.isnan(col), 0.0, col)
        for g, coef in p.get("group_offsets", {}).items():
            logits += float(coef) * np.array([s.group == g for s in d.subjects], dtype=float)
        keep = rng.random(d.n) < _sigmoid(logits)
        return d.with_subjects(s for s, k in zip(d.subjects, keep) if k)

    if spec.kind == "label_noise":
        # flip the presence of failure events inside the declared window:
        # subjects with one lose those events, subjects without gain one
        flip_rates = p.get("flip_rates", {})
        window = int(p.get("window_days", 3650))
        kind, degree, jur = tuple(p.get("event", ("conviction", "felony", "in_state")))
        draws = rng.random(d.n)
        add_days = rng.integers(1, window + 1, size=d.n)
        subjects = []
        for s, u, extra in zip(d.subjects, draws, add_days):
            rate = float(flip_rates.get(s.group, 0.0))
            if rate <= 0 or u >= rate:
                subjects.append(s)
                continue
            in_window = [e for e in s.events
                         if s.anchor_day < e.day <= s.anchor_day + window]
            if in_window:
                events = tuple(e for e in s.events if e not in in_window)
            else:
                fake = EventRecord(kind, degree, s.anchor_day + int(extra), jur)
                events = tuple(sorted(
                    s.events + (fake,), key=lambda e: (e.day, e.event_kind, e.degree)
                ))
            subjects.append(
                SubjectRecord(s.subject_id, s.group, s.anchor_day, s.features, events)
            )
        return d.with_subjects(subjects)

    if spec.kind == "measurement_noise":
        sds = {k: float(v) for k, v in p.get("sds", {}).items()}
        noise = {name: rng.normal(0.0, sd, size=d.n) if sd > 0 else np.zeros(d.n)
                 for name, sd in sds.items()}
        subjects = []
        for i, s in enumerate(d.subjects):
            features = dict(s.features)
            changed = False
            for name in sds:
                if features.get(name) is not None and sds[name] > 0:
                    features[name] = float(features[name] + noise[name][i])
                    changed = True
            subjects.append(
                SubjectRecord(s.subject_id, s.group, s.anchor_day, features, s.events)
                if changed else s
            )
        return d.with_subjects(subjects)

    # missingness
    name = p["feature"]
    mechanism = p.get("mechanism", "MCAR")
    rate = float(p.get("rate", 0.0))
    slope = float(p.get("slope", 1.0))
    if rate == 0.0:
        return d
    base_logit = math.log(rate / (1.0 - rate)) if 0 < rate < 1 else (math.inf if rate >= 1 else -math.inf)
    if mechanism == "MCAR":
        probs = np.full(d.n, rate)
    else:
        cond_name = p["given"] if mechanism == "MAR" else name
        col = np.array(
            [s.features.get(cond_name) if s.features.get(cond_name) is not None else np.nan
             for s in d.subjects],
            dtype=float,
        )
        probs = _sigmoid(base_logit + slope * _standardized(col))
    blank = rng.random(d.n) < probs
    subjects = []
    for s, b in zip(d.subjects, blank):
        if not b or s.features.get(name) is None:
            subjects.append(s)
            continue
        features = dict(s.features)
        features[name] = None
        subjects.append(SubjectRecord(s.subject_id, s.group, s.anchor_day, features, s.events))
    return d.with_subjects(subjects)
