import numpy as np
import pytest

from riskforks.data import Dataset, EventRecord, FeatureSchema, FeatureSpec, SubjectRecord


@pytest.fixture
def tiny_schema() -> FeatureSchema:
    return FeatureSchema((
        FeatureSpec("age", "numeric"),
        FeatureSpec("offense", "categorical", ("violent", "property", "drug")),
    ))


def make_subject(sid, group="A", anchor=100, age=30.0, offense="property", events=()):
    return SubjectRecord(
        subject_id=sid,
        group=group,
        anchor_day=anchor,
        features={"age": age, "offense": offense},
        events=tuple(events),
    )


@pytest.fixture
def tiny_dataset(tiny_schema) -> Dataset:
    subjects = (
        make_subject("S1", "A", events=[EventRecord("conviction", "felony", 400, "in_state")]),
        make_subject("S2", "B", age=45.0, offense="violent"),
        make_subject("S3", "A", age=None),
        make_subject("S4", "B", offense="drug",
                     events=[EventRecord("arrest", "misdemeanor", 50, "out_of_state")]),
    )
    return Dataset(schema=tiny_schema, subjects=subjects,
                   provenance={"source": "unit fixture", "period": "n/a", "biases": "none"})


def random_labels_scores(rng, n, ties=False):
    scores = rng.random(n)
    if ties:
        scores = np.round(scores, 1)
    labels = np.zeros(n, dtype=int)
    labels[rng.permutation(n)[: rng.integers(1, n)]] = 1
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    return scores, labels
