"""Run-configuration parsing: one JSON document describing the whole run.

The config carries exactly one data source (a CSV pair or a synthetic
population), the forking-path universe, holdout policy, admissibility rule,
binning schemes, metric settings, and the master seed. The manifest's config
hash is taken over the canonical serialization minus the volatile keys
(workers, out) that must not affect any score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from riskforks.data import FeatureSchema, FeatureSpec
from riskforks.errors import ConfigError
from riskforks.hashing import stable_hash
from riskforks.inconsistency import (
    DEFAULT_ABSTAIN_FLIP,
    DEFAULT_ABSTAIN_RANGE,
    BinningScheme,
    RashomonRule,
    equal_width_scheme,
)
from riskforks.metrics import metric_orientation
from riskforks.synth import (
    BiasInjectorSpec,
    CategoricalFeature,
    HazardCalibration,
    NumericFeature,
    PiecewiseHazard,
    PopulationSpec,
    PriorHistorySpec,
)
from riskforks.universe import Constraint, Dimension, Option, UniverseSpec

#: keys excluded from the config content hash because they cannot affect scores
VOLATILE_KEYS = ("workers", "out")


@dataclass(frozen=True)
class SynthSection:
    population: PopulationSpec
    injectors: tuple[BiasInjectorSpec, ...] = ()


@dataclass(frozen=True)
class DataSection:
    dataset_path: Path
    events_path: Path | None
    schema: FeatureSchema
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    master_seed: int
    workers: int
    out: Path | None
    synth: SynthSection | None
    data: DataSection | None
    holdout_fraction: float
    stratify_by: str | None
    universe: UniverseSpec
    baseline_choices: dict | None
    rashomon: RashomonRule | None
    binning: tuple[BinningScheme, ...]
    budgets: tuple[float, ...]
    fairness_threshold: float
    min_group_size: int
    abstain_range: float
    abstain_flip: float
    curve_subjects: tuple[str, ...]
    raw: dict

    def content_hash(self) -> int:
        semantic = {k: v for k, v in self.raw.items() if k not in VOLATILE_KEYS}
        return stable_hash(semantic)

    def scheme(self, name: str) -> BinningScheme:
        for s in self.binning:
            if s.name == name:
                return s
        raise ConfigError(f"unknown binning scheme {name!r}")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _parse_schema(items) -> FeatureSchema:
    specs = []
    for item in items:
        specs.append(
            FeatureSpec(
                name=item["name"],
                kind=item["kind"],
                levels=tuple(item.get("levels", ())),
                missing_allowed=bool(item.get("missing_allowed", True)),
            )
        )
    return FeatureSchema(tuple(specs))


def _parse_population(raw: dict) -> PopulationSpec:
    features = []
    for item in raw.get("features", []):
        name, kind = item["name"], item["kind"]
        if kind == "numeric":
            features.append((name, NumericFeature(float(item["mean"]), float(item["sd"]))))
        elif kind == "categorical":
            features.append(
                (name, CategoricalFeature(tuple(item["levels"]), tuple(item["probs"])))
            )
        else:
            raise ConfigError(f"population feature {name!r}: unknown kind {kind!r}")
    hz = raw.get("hazard")
    _require(isinstance(hz, dict), "population.hazard must be an object")
    if "targets" in hz:
        hazard = HazardCalibration(
            targets=tuple((int(w), float(r)) for w, r in hz["targets"]),
            mode=hz.get("mode", "baseline"),
        )
    else:
        hazard = PiecewiseHazard(tuple(int(k) for k in hz["knots"]),
                                 tuple(float(r) for r in hz["rates"]))
    priors = None
    if raw.get("priors"):
        pr = raw["priors"]
        priors = PriorHistorySpec(
            arrests_per_year=float(pr.get("arrests_per_year", 0.0)),
            conviction_prob=float(pr.get("conviction_prob", 0.5)),
            felony_prob=float(pr.get("felony_prob", 0.5)),
        )
    return PopulationSpec(
        n=int(raw["n"]),
        features=tuple(features),
        group_probs=dict(raw["groups"]),
        coefficients=dict(raw.get("coefficients", {})),
        group_intercepts=dict(raw.get("group_intercepts", {})),
        hazard=hazard,
        anchor_day=int(raw.get("anchor_day", 3650)),
        priors=priors,
        failure_event=tuple(raw.get("failure_event", ("conviction", "felony", "in_state"))),
        provenance=dict(raw.get("provenance", {})),
    )


def _parse_universe(raw: dict) -> UniverseSpec:
    _require(isinstance(raw, dict) and raw.get("dimensions"),
             "universe.dimensions must be a non-empty list")
    dims = []
    for d in raw["dimensions"]:
        options = tuple(
            Option(
                name=o["name"],
                parameters=dict(o.get("parameters", {})),
                rationale=o.get("rationale", ""),
                provenance=o.get("provenance", "domain_knowledge"),
            )
            for o in d.get("options", [])
        )
        dims.append(Dimension(name=d["name"], options=options))
    constraints = tuple(
        Constraint(pairs=tuple((p[0], p[1]) for p in c["pairs"]))
        for c in raw.get("constraints", [])
    )
    return UniverseSpec(dimensions=tuple(dims), constraints=constraints)


def _parse_binning(items) -> tuple[BinningScheme, ...]:
    schemes = []
    for item in items:
        if "cuts" in item:
            schemes.append(
                BinningScheme(item["name"], tuple(float(c) for c in item["cuts"]),
                              tuple(item["labels"]))
            )
        else:
            schemes.append(
                equal_width_scheme(item["name"], int(item["bins"]), item.get("labels"))
            )
    names = [s.name for s in schemes]
    _require(len(set(names)) == len(names), "binning scheme names must be unique")
    return tuple(schemes)


def parse_config(source, base_dir: Path | None = None) -> RunConfig:
    """Parse a config from a JSON file path or an already-loaded dict."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        base_dir = base_dir or path.parent
    else:
        raw = dict(source)
        base_dir = base_dir or Path.cwd()

    _require(isinstance(raw, dict), "config must be a JSON object")
    _require("master_seed" in raw, "config requires a master_seed")
    has_synth, has_data = "synth" in raw, "data" in raw
    _require(has_synth != has_data, "config must declare exactly one of 'synth' or 'data'")

    synth = None
    data = None
    if has_synth:
        synth_raw = raw["synth"]
        population = _parse_population(synth_raw.get("population", {}))
        injectors = tuple(
            BiasInjectorSpec(kind=i["kind"], params=dict(i.get("params", {})))
            for i in synth_raw.get("injectors", [])
        )
        schema = population.schema()
        for inj in injectors:
            inj.validate(schema)
        synth = SynthSection(population, injectors)
    else:
        d = raw["data"]
        schema = _parse_schema(d.get("schema", []))
        events = d.get("events")
        data = DataSection(
            dataset_path=(base_dir / d["dataset"]).resolve(),
            events_path=(base_dir / events).resolve() if events else None,
            schema=schema,
            provenance=dict(d.get("provenance", {})),
        )

    universe = _parse_universe(raw.get("universe", {}))

    holdout = raw.get("holdout", {})
    fraction = float(holdout.get("fraction", 0.25))
    _require(0 < fraction < 1, "holdout.fraction must be in (0,1)")
    stratify_by = holdout.get("stratify_by")
    if stratify_by is not None and stratify_by != "group":
        _require(stratify_by in schema and schema[stratify_by].kind == "categorical",
                 f"holdout.stratify_by {stratify_by!r} must be 'group' or a categorical feature")

    rashomon = None
    if raw.get("rashomon"):
        rr = raw["rashomon"]
        try:
            metric_orientation(rr["metric"])
        except KeyError:
            raise ConfigError(f"rashomon.metric {rr.get('metric')!r} is not a known metric")
        rashomon = RashomonRule(rr["metric"], rr.get("mode", "absolute"), float(rr["value"]))

    binning = _parse_binning(raw.get("binning", [{"name": "three_level", "bins": 3,
                                                  "labels": ["low", "medium", "high"]}]))

    fairness = raw.get("fairness", {})
    abstain = raw.get("abstain", {})
    budgets = tuple(float(b) for b in raw.get("budgets", (0.1,)))
    _require(all(0 < b <= 1 for b in budgets), "budgets must lie in (0,1]")

    config = RunConfig(
        master_seed=int(raw["master_seed"]),
        workers=int(raw.get("workers", 1)),
        out=(base_dir / raw["out"]).resolve() if raw.get("out") else None,
        synth=synth,
        data=data,
        holdout_fraction=fraction,
        stratify_by=stratify_by,
        universe=universe,
        baseline_choices=dict(raw["baseline"]) if raw.get("baseline") else None,
        rashomon=rashomon,
        binning=binning,
        budgets=budgets,
        fairness_threshold=float(fairness.get("threshold", 0.5)),
        min_group_size=int(fairness.get("min_group_size", 30)),
        abstain_range=float(abstain.get("range", DEFAULT_ABSTAIN_RANGE)),
        abstain_flip=float(abstain.get("flip", DEFAULT_ABSTAIN_FLIP)),
        curve_subjects=tuple(raw.get("curve_subjects", ())),
        raw=raw,
    )
    _require(0 < config.fairness_threshold < 1, "fairness.threshold must be in (0,1)")
    for scheme_ref in _binning_scheme_refs(universe):
        config.scheme(scheme_ref)  # raises ConfigError on dangling references
    if config.baseline_choices is not None:
        declared = {d.name for d in universe.dimensions}
        _require(set(config.baseline_choices) == declared,
                 "baseline must choose exactly one option per declared dimension")
    return config


def _binning_scheme_refs(universe: UniverseSpec):
    for dim in universe.dimensions:
        if dim.name != "binning":
            continue
        for opt in dim.options:
            ref = opt.parameters.get("scheme")
            if ref:
                yield ref
