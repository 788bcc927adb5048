"""Declaration, validation, and enumeration of the forking-path universe.

A universe is an ordered list of dimensions (a closed set of nine pipeline
stages), each with one or more options carrying a human-argued reasonableness
annotation. Exclusion constraints mark combinations as jointly inadmissible.
Enumeration is a pure function of the declared spec: canonical order, stable
path ids, platform-independent seeds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from riskforks.errors import InvalidSpecError, NoAdmissiblePath, UnknownReference
from riskforks.hashing import derive_seed, stable_hash

DIMENSION_NAMES = (
    "outcome_definition",
    "imputation",
    "rare_grouping",
    "resampling",
    "subpopulation",
    "variable_selection",
    "model_family",
    "model_seed",
    "binning",
)

PROVENANCE_KINDS = ("local_law", "domain_knowledge", "data_driven")

#: soft ceiling; larger universes are legal but get a warning
ADMISSIBLE_SOFT_LIMIT = 100_000


@dataclass(frozen=True)
class Option:
    name: str
    parameters: dict = field(default_factory=dict)
    rationale: str = ""
    provenance: str = "domain_knowledge"

    def __post_init__(self):
        if self.provenance not in PROVENANCE_KINDS:
            raise InvalidSpecError(
                f"option {self.name!r}: provenance must be one of {PROVENANCE_KINDS}"
            )


@dataclass(frozen=True)
class Dimension:
    name: str
    options: tuple[Option, ...]

    def __post_init__(self):
        if self.name not in DIMENSION_NAMES:
            raise InvalidSpecError(
                f"dimension {self.name!r} is not one of the pipeline stages {DIMENSION_NAMES}"
            )
        if not self.options:
            raise InvalidSpecError(f"dimension {self.name!r} has no options")
        names = [o.name for o in self.options]
        if len(set(names)) != len(names):
            raise InvalidSpecError(f"dimension {self.name!r} has duplicate option names")

    def option(self, name: str) -> Option:
        for o in self.options:
            if o.name == name:
                return o
        raise KeyError(name)


@dataclass(frozen=True)
class Constraint:
    """Conjunction of (dimension, option) pairs that is jointly inadmissible."""

    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.pairs:
            raise InvalidSpecError("constraint must name at least one (dimension, option) pair")

    def matches(self, choices: dict) -> bool:
        return all(choices.get(dim) == opt for dim, opt in self.pairs)


@dataclass(frozen=True)
class UniverseSpec:
    dimensions: tuple[Dimension, ...]
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise InvalidSpecError("duplicate dimension names in universe")
        if not self.dimensions:
            raise InvalidSpecError("universe declares no dimensions")

    def dimension(self, name: str) -> Dimension:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise KeyError(name)


@dataclass(frozen=True)
class PathConfig:
    """One concrete choice per declared dimension."""

    choices: dict  # dimension name -> option name
    path_id: int

    def option_for(self, universe: UniverseSpec, dim: str) -> Option:
        return universe.dimension(dim).option(self.choices[dim])


def path_id_for(choices: dict) -> int:
    """Stable 64-bit id: hash of the canonical serialization of the choices."""
    return stable_hash(dict(choices))


def path_seed(master_seed: int, path_id: int) -> int:
    """Stable per-path seed, identical across platforms and worker layouts."""
    return derive_seed(master_seed, path_id)


@dataclass(frozen=True)
class UniverseValidation:
    raw_count: int
    admissible_count: int
    empty_rationale: tuple[tuple[str, str], ...]
    warnings: tuple[str, ...]


def _check_references(u: UniverseSpec) -> None:
    declared = {d.name: {o.name for o in d.options} for d in u.dimensions}
    for c in u.constraints:
        for dim, opt in c.pairs:
            if dim not in declared:
                raise UnknownReference(f"constraint references unknown dimension {dim!r}")
            if opt not in declared[dim]:
                raise UnknownReference(
                    f"constraint references unknown option {opt!r} of dimension {dim!r}"
                )


def validate_universe(u: UniverseSpec) -> UniverseValidation:
    """Counts raw and admissible paths; flags options missing a rationale."""
    _check_references(u)
    raw = 1
    for d in u.dimensions:
        raw *= len(d.options)
    admissible = sum(1 for _ in _admissible_choices(u))
    if admissible == 0:
        raise NoAdmissiblePath("constraints exclude every combination")
    empty = tuple(
        (d.name, o.name) for d in u.dimensions for o in d.options if not o.rationale.strip()
    )
    warnings = []
    if empty:
        warnings.append(f"{len(empty)} option(s) lack a reasonableness rationale")
    if admissible > ADMISSIBLE_SOFT_LIMIT:
        warnings.append(
            f"{admissible} admissible paths exceeds the soft limit of {ADMISSIBLE_SOFT_LIMIT}"
        )
    return UniverseValidation(raw, admissible, empty, tuple(warnings))


def _admissible_choices(u: UniverseSpec):
    names = [d.name for d in u.dimensions]
    option_lists = [[o.name for o in d.options] for d in u.dimensions]
    for combo in itertools.product(*option_lists):
        choices = dict(zip(names, combo))
        if any(c.matches(choices) for c in u.constraints):
            continue
        yield choices


def enumerate_paths(u: UniverseSpec) -> list[PathConfig]:
    """All admissible paths, each once, in canonical order.

    Canonical order is the Cartesian product in declared dimension order with
    options in declared order. Path ids must be unique; a collision (which
    would require distinct choice maps hashing equal) is a hard error.
    """
    validate_universe(u)
    paths = []
    seen: dict[int, dict] = {}
    for choices in _admissible_choices(u):
        pid = path_id_for(choices)
        if pid in seen:
            raise InvalidSpecError(
                f"path id collision between {seen[pid]!r} and {choices!r}"
            )
        seen[pid] = choices
        paths.append(PathConfig(choices=choices, path_id=pid))
    return paths
