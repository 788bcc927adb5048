"""Small JSON-friendly predicate language over subjects.

Used by the subpopulation-restriction fork and by the coverage-filter bias
injector. A predicate is a nested dict, e.g.::

    {"kind": "event_count_at_least", "event_kinds": ["conviction"],
     "degrees": ["felony"], "window": "pre_anchor", "min_count": 1}

    {"kind": "all_of", "parts": [
        {"kind": "feature_compare", "feature": "age", "op": ">=", "value": 21},
        {"kind": "group_in", "groups": ["B"]}]}

Comparisons against a missing feature value are False.
"""

from __future__ import annotations

import operator

from riskforks.errors import UnknownFeatureError
from riskforks import data as _data

_OPS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}

_WINDOWS = ("pre_anchor", "post_anchor", "any")


def validate_predicate(pred: dict, schema: "_data.FeatureSchema") -> None:
    """Raise if the predicate is malformed or references unknown names."""
    if not isinstance(pred, dict) or "kind" not in pred:
        raise UnknownFeatureError(f"predicate must be a dict with a 'kind': {pred!r}")
    kind = pred["kind"]
    if kind == "true":
        return
    if kind == "feature_compare":
        name = pred.get("feature")
        if name not in schema.names():
            raise UnknownFeatureError(f"predicate references unknown feature {name!r}")
        if pred.get("op") not in _OPS:
            raise UnknownFeatureError(f"unknown comparison op {pred.get('op')!r}")
        if "value" not in pred:
            raise UnknownFeatureError("feature_compare predicate needs a 'value'")
        return
    if kind == "group_in":
        if not pred.get("groups"):
            raise UnknownFeatureError("group_in predicate needs non-empty 'groups'")
        return
    if kind == "event_count_at_least":
        for key, allowed in (
            ("event_kinds", _data.EVENT_KINDS),
            ("degrees", _data.DEGREES),
            ("jurisdictions", _data.JURISDICTIONS),
        ):
            vals = pred.get(key)
            if vals is not None:
                bad = [v for v in vals if v not in allowed]
                if bad:
                    raise UnknownFeatureError(f"unknown {key} in predicate: {bad}")
        if pred.get("window", "any") not in _WINDOWS:
            raise UnknownFeatureError(f"unknown window {pred.get('window')!r}")
        if int(pred.get("min_count", 1)) < 1:
            raise UnknownFeatureError("min_count must be >= 1")
        return
    if kind in ("all_of", "any_of"):
        parts = pred.get("parts")
        if not parts:
            raise UnknownFeatureError(f"{kind} predicate needs non-empty 'parts'")
        for part in parts:
            validate_predicate(part, schema)
        return
    if kind == "not":
        if "part" not in pred:
            raise UnknownFeatureError("not predicate needs a 'part'")
        validate_predicate(pred["part"], schema)
        return
    raise UnknownFeatureError(f"unknown predicate kind {kind!r}")


def subject_matches(pred: dict, subject: "_data.SubjectRecord") -> bool:
    kind = pred["kind"]
    if kind == "true":
        return True
    if kind == "feature_compare":
        value = subject.features.get(pred["feature"])
        if value is None:
            return False
        return bool(_OPS[pred["op"]](value, pred["value"]))
    if kind == "group_in":
        return subject.group in pred["groups"]
    if kind == "event_count_at_least":
        kinds = pred.get("event_kinds")
        degrees = pred.get("degrees")
        jurisdictions = pred.get("jurisdictions")
        window = pred.get("window", "any")
        need = int(pred.get("min_count", 1))
        count = 0
        for ev in subject.events:
            if kinds is not None and ev.event_kind not in kinds:
                continue
            if degrees is not None and ev.degree not in degrees:
                continue
            if jurisdictions is not None and ev.jurisdiction not in jurisdictions:
                continue
            if window == "pre_anchor" and ev.day > subject.anchor_day:
                continue
            if window == "post_anchor" and ev.day <= subject.anchor_day:
                continue
            count += 1
            if count >= need:
                return True
        return False
    if kind == "all_of":
        return all(subject_matches(p, subject) for p in pred["parts"])
    if kind == "any_of":
        return any(subject_matches(p, subject) for p in pred["parts"])
    if kind == "not":
        return not subject_matches(pred["part"], subject)
    raise UnknownFeatureError(f"unknown predicate kind {kind!r}")


def describe_predicate(pred: dict) -> str:
    """One-line human-readable rendering, used in provenance records."""
    kind = pred["kind"]
    if kind == "true":
        return "everyone"
    if kind == "feature_compare":
        return f"{pred['feature']} {pred['op']} {pred['value']}"
    if kind == "group_in":
        return f"group in {{{', '.join(pred['groups'])}}}"
    if kind == "event_count_at_least":
        parts = []
        if pred.get("degrees"):
            parts.append("/".join(pred["degrees"]))
        if pred.get("event_kinds"):
            parts.append("/".join(pred["event_kinds"]))
        else:
            parts.append("events")
        window = pred.get("window", "any")
        tail = {"pre_anchor": " before anchor", "post_anchor": " after anchor", "any": ""}[window]
        return f">= {pred.get('min_count', 1)} {' '.join(parts)}{tail}"
    if kind == "all_of":
        return " and ".join(f"({describe_predicate(p)})" for p in pred["parts"])
    if kind == "any_of":
        return " or ".join(f"({describe_predicate(p)})" for p in pred["parts"])
    if kind == "not":
        return f"not ({describe_predicate(pred['part'])})"
    return repr(pred)
