"""Data model, CSV ingestion, validation, holdout splitting, datasheets.

Subjects are immutable after construction and safe to share read-only across
worker processes. Missing feature values are represented as ``None`` — never a
sentinel number — so imputation forks can distinguish "absent" from any real
value.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from riskforks.errors import (
    DuplicateSubjectId,
    MissingProvenance,
    SchemaViolation,
    StratumTooSmall,
)
from riskforks.hashing import derive_seed

EVENT_KINDS = ("arrest", "conviction", "incarceration_release", "failure_to_appear")
DEGREES = ("felony", "misdemeanor", "ordinance")
JURISDICTIONS = ("in_state", "out_of_state")

DAYS_PER_YEAR = 365
#: below this many subjects, per-group fairness numbers are flagged as noise
MIN_GROUP_SIZE = 30


def years_to_days(years: float) -> int:
    """Outcome windows are integer days; 1 year = 365 days, floor."""
    return int(years * DAYS_PER_YEAR)


@dataclass(frozen=True)
class EventRecord:
    event_kind: str
    degree: str
    day: int
    jurisdiction: str

    def __post_init__(self):
        if self.event_kind not in EVENT_KINDS:
            raise SchemaViolation(f"unknown event_kind {self.event_kind!r}")
        if self.degree not in DEGREES:
            raise SchemaViolation(f"unknown degree {self.degree!r}")
        if self.jurisdiction not in JURISDICTIONS:
            raise SchemaViolation(f"unknown jurisdiction {self.jurisdiction!r}")
        if not isinstance(self.day, int) or self.day < 0:
            raise SchemaViolation(f"event day must be a non-negative int, got {self.day!r}")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # "numeric" | "categorical"
    levels: tuple[str, ...] = ()
    missing_allowed: bool = True

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise SchemaViolation(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and not self.levels:
            raise SchemaViolation(f"categorical feature {self.name!r} declares no levels")
        if self.kind == "numeric" and self.levels:
            raise SchemaViolation(f"numeric feature {self.name!r} must not declare levels")


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaViolation("duplicate feature names in schema")

    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def __getitem__(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(f.name == name for f in self.features)


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    group: str
    anchor_day: int
    features: dict  # name -> float | str | None
    events: tuple[EventRecord, ...] = ()


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    subjects: tuple[SubjectRecord, ...]
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.subjects)

    def subject_ids(self) -> tuple[str, ...]:
        return tuple(s.subject_id for s in self.subjects)

    def with_subjects(self, subjects) -> "Dataset":
        return Dataset(schema=self.schema, subjects=tuple(subjects), provenance=self.provenance)


def _parse_feature_cell(cell: str, spec: FeatureSpec, row_no: int):
    if cell == "":
        if not spec.missing_allowed:
            raise SchemaViolation(
                f"row {row_no}: feature {spec.name!r} is empty but missing is not allowed"
            )
        return None
    if spec.kind == "numeric":
        try:
            return float(cell)
        except ValueError:
            if spec.missing_allowed:
                return None
            raise SchemaViolation(
                f"row {row_no}: cannot parse {cell!r} as numeric feature {spec.name!r}"
            )
    if cell not in spec.levels:
        if spec.missing_allowed:
            return None
        raise SchemaViolation(
            f"row {row_no}: {cell!r} is not a declared level of feature {spec.name!r}"
        )
    return cell


def load_dataset(path, schema: FeatureSchema, events_path=None, provenance=None) -> Dataset:
    """Read the subjects table (and optional companion events table).

    Subjects table columns: subject_id, group, anchor_day, then one column per
    schema feature. Empty string means missing. Unparseable cells in
    missing-allowed features become missing; anywhere else they are a schema
    violation naming the row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaViolation(f"{path}: empty file")
        expected = ["subject_id", "group", "anchor_day", *schema.names()]
        if header != expected:
            raise SchemaViolation(f"{path}: header {header!r} != expected {expected!r}")
        rows = list(reader)

    subjects: list[SubjectRecord] = []
    seen: set[str] = set()
    for i, row in enumerate(rows, start=2):
        if len(row) != len(expected):
            raise SchemaViolation(f"row {i}: expected {len(expected)} cells, got {len(row)}")
        sid, group, anchor_raw = row[0], row[1], row[2]
        if not sid:
            raise SchemaViolation(f"row {i}: empty subject_id")
        if sid in seen:
            raise DuplicateSubjectId(f"duplicate subject_id {sid!r}")
        seen.add(sid)
        if not group:
            raise SchemaViolation(f"row {i}: empty group for subject {sid!r}")
        try:
            anchor = int(anchor_raw)
        except ValueError:
            raise SchemaViolation(f"row {i}: anchor_day {anchor_raw!r} is not an integer")
        features = {
            spec.name: _parse_feature_cell(cell, spec, i)
            for spec, cell in zip(schema.features, row[3:])
        }
        subjects.append(SubjectRecord(sid, group, anchor, features))

    events: dict[str, list[EventRecord]] = {s.subject_id: [] for s in subjects}
    if events_path is not None:
        with open(events_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected_ev = ["subject_id", "event_kind", "degree", "day", "jurisdiction"]
            if header != expected_ev:
                raise SchemaViolation(
                    f"{events_path}: header {header!r} != expected {expected_ev!r}"
                )
            for i, row in enumerate(reader, start=2):
                sid = row[0]
                if sid not in events:
                    raise SchemaViolation(f"events row {i}: unknown subject_id {sid!r}")
                try:
                    day = int(row[3])
                except ValueError:
                    raise SchemaViolation(f"events row {i}: day {row[3]!r} is not an integer")
                events[sid].append(EventRecord(row[1], row[2], day, row[4]))

    subjects = [
        SubjectRecord(s.subject_id, s.group, s.anchor_day, s.features,
                      tuple(events[s.subject_id]))
        for s in subjects
    ]
    return Dataset(schema=schema, subjects=tuple(subjects), provenance=dict(provenance or {}))


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_dataset(d: Dataset, path, events_path=None) -> None:
    """Write subjects (and events) as UTF-8 CSV; byte-deterministic."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "group", "anchor_day", *d.schema.names()])
        for s in d.subjects:
            w.writerow(
                [s.subject_id, s.group, s.anchor_day]
                + [_format_value(s.features[name]) for name in d.schema.names()]
            )
    if events_path is not None:
        with open(events_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", "event_kind", "degree", "day", "jurisdiction"])
            for s in d.subjects:
                for ev in s.events:
                    w.writerow([s.subject_id, ev.event_kind, ev.degree, ev.day, ev.jurisdiction])


@dataclass(frozen=True)
class ValidationReport:
    n_subjects: int
    missingness: dict  # feature -> rate
    group_counts: dict
    event_kind_counts: dict
    warnings: tuple[str, ...]

    def as_lines(self) -> list[str]:
        lines = [f"subjects: {self.n_subjects}"]
        for name in sorted(self.missingness):
            lines.append(f"missingness.{name}: {self.missingness[name]:.4f}")
        for g in sorted(self.group_counts):
            lines.append(f"group.{g}: {self.group_counts[g]}")
        for k in sorted(self.event_kind_counts):
            lines.append(f"events.{k}: {self.event_kind_counts[k]}")
        for wmsg in self.warnings:
            lines.append(f"warning: {wmsg}")
        return lines


def validate_dataset(d: Dataset, min_group_size: int = MIN_GROUP_SIZE) -> ValidationReport:
    """Report-only summary: missingness, group counts, event counts."""
    warnings: list[str] = []
    missingness = {}
    for name in d.schema.names():
        if d.n == 0:
            missingness[name] = 0.0
        else:
            n_missing = sum(1 for s in d.subjects if s.features.get(name) is None)
            missingness[name] = n_missing / d.n
    group_counts: dict[str, int] = {}
    event_kind_counts = {k: 0 for k in EVENT_KINDS}
    for s in d.subjects:
        group_counts[s.group] = group_counts.get(s.group, 0) + 1
        for ev in s.events:
            event_kind_counts[ev.event_kind] += 1
    if d.n == 0:
        warnings.append("dataset is empty")
    for g in sorted(group_counts):
        if group_counts[g] < min_group_size:
            warnings.append(
                f"group {g!r} has {group_counts[g]} subjects (< {min_group_size}); "
                "per-group metrics will be noisy"
            )
    return ValidationReport(
        n_subjects=d.n,
        missingness=missingness,
        group_counts=group_counts,
        event_kind_counts=event_kind_counts,
        warnings=tuple(warnings),
    )


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_inconsistency_holdout(
    d: Dataset, fraction: float, master_seed: int, stratify_by: str | None = None
) -> tuple[Dataset, Dataset]:
    """Deterministic disjoint (train, holdout) partition.

    Per-stratum shuffles run under seeds derived from (master_seed, stratum
    label), and subject ids are sorted before shuffling, so the partition is
    independent of the dataset's insertion order.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    if stratify_by is None:
        strata = {"__all__": list(d.subjects)}
    elif stratify_by == "group":
        strata = {}
        for s in d.subjects:
            strata.setdefault(s.group, []).append(s)
    else:
        spec = d.schema[stratify_by] if stratify_by in d.schema else None
        if spec is None or spec.kind != "categorical":
            raise ValueError(
                f"stratify_by must be 'group' or a categorical feature, got {stratify_by!r}"
            )
        strata = {}
        for s in d.subjects:
            value = s.features.get(stratify_by)
            strata.setdefault("__missing__" if value is None else str(value), []).append(s)

    holdout_ids: set[str] = set()
    for label in sorted(strata):
        members = strata[label]
        if len(members) < 2:
            raise StratumTooSmall(
                f"stratum {label!r} has {len(members)} subject(s); need at least 2"
            )
        ids = sorted(s.subject_id for s in members)
        rng = np.random.default_rng(derive_seed(master_seed, "holdout", label))
        rng.shuffle(ids)
        k = _round_half_up(fraction * len(ids))
        holdout_ids.update(ids[:k])

    train = d.with_subjects(s for s in d.subjects if s.subject_id not in holdout_ids)
    holdout = d.with_subjects(s for s in d.subjects if s.subject_id in holdout_ids)
    return train, holdout


def datasheet_text(d: Dataset) -> str:
    """Human-readable datasheet: provenance plus the validation report."""
    if not d.provenance or any(not str(v).strip() for v in d.provenance.values()):
        raise MissingProvenance(
            "datasheet requires non-empty provenance fields (source, period, known biases)"
        )
    buf = io.StringIO()
    buf.write("# Datasheet\n")
    for key in sorted(d.provenance):
        buf.write(f"{key}: {d.provenance[key]}\n")
    buf.write("\n# Validation\n")
    for line in validate_dataset(d).as_lines():
        buf.write(line + "\n")
    return buf.getvalue()


def emit_datasheet(d: Dataset, path) -> None:
    text = datasheet_text(d)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
