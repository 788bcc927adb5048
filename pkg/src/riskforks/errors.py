"""Exception types, one per externally meaningful failure condition."""


class RiskforksError(Exception):
    """Base class for all package errors."""


class ConfigError(RiskforksError):
    """Run configuration is malformed or internally inconsistent."""


class SchemaViolation(RiskforksError):
    """Input data does not conform to the declared feature schema."""


class DuplicateSubjectId(SchemaViolation):
    pass


class UnknownFeatureError(RiskforksError):
    """A predicate or injector references a feature the schema does not declare."""


class StratumTooSmall(RiskforksError):
    pass


class MissingProvenance(RiskforksError):
    pass


class InvalidSpecError(RiskforksError):
    """A generator or injector specification is invalid."""


class NonMonotoneTargets(InvalidSpecError):
    pass


class RateOutOfRange(InvalidSpecError):
    pass


class NoAdmissiblePath(RiskforksError):
    pass


class UnknownReference(RiskforksError):
    """A universe constraint names an undeclared dimension or option."""


class AllRowsDropped(RiskforksError):
    pass


class EmptyMinority(RiskforksError):
    pass


class EmptyResult(RiskforksError):
    pass


class DegenerateDesign(RiskforksError):
    pass


class SingleClassError(RiskforksError):
    pass


class TooFewTrainingRows(RiskforksError):
    pass


class NoPositives(RiskforksError):
    pass


class SchemaMismatch(RiskforksError):
    pass


class AllPathsFailed(RiskforksError):
    pass


class EmptyRashomonSet(RiskforksError):
    pass


class BaselineNotAdmissible(RiskforksError):
    pass


class UnknownSubject(RiskforksError):
    pass
