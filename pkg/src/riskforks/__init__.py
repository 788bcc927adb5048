"""Multiverse analysis for risk-prediction pipelines.

Enumerates the "reasonable forking paths" of a binary risk-scoring pipeline
(outcome operationalization, preprocessing, variable selection, model family,
seeds, risk binning), trains and scores every admissible path deterministically,
and summarizes per-person predictive inconsistency: score distributions,
multiplicity metrics, bin-assignment disagreement, and specification curves.
"""

__version__ = "0.1.0"

from riskforks.data import (
    Dataset,
    EventRecord,
    FeatureSchema,
    FeatureSpec,
    SubjectRecord,
    load_dataset,
    split_inconsistency_holdout,
    validate_dataset,
    write_dataset,
)
from riskforks.universe import (
    Dimension,
    Option,
    PathConfig,
    UniverseSpec,
    enumerate_paths,
    path_seed,
    validate_universe,
)
from riskforks.inconsistency import BinningScheme, ScoreMatrix, bin_scores

__all__ = [
    "__version__",
    "Dataset",
    "EventRecord",
    "FeatureSchema",
    "FeatureSpec",
    "SubjectRecord",
    "load_dataset",
    "write_dataset",
    "validate_dataset",
    "split_inconsistency_holdout",
    "UniverseSpec",
    "Dimension",
    "Option",
    "PathConfig",
    "validate_universe",
    "enumerate_paths",
    "path_seed",
    "BinningScheme",
    "ScoreMatrix",
    "bin_scores",
]
