"""Exception types shared across the package."""


class QaccelError(Exception):
    """Base class for all errors raised by this package."""


# --- relational core ---

class TypeMismatch(QaccelError):
    pass


class UnknownTable(QaccelError):
    pass


class UnknownColumn(QaccelError):
    pass


# --- SQL frontend ---

class SqlSyntaxError(QaccelError):
    def __init__(self, message, position=None, expected=None):
        super().__init__(message)
        self.position = position
        self.expected = expected or []


class UnsupportedFeature(QaccelError):
    pass


class ResolutionError(QaccelError):
    pass


class Unrepresentable(QaccelError):
    pass


# --- templates / automata ---

class MalformedTemplate(QaccelError):
    pass


class NoFiniteTree(QaccelError):
    pass


class AmbiguousAssignment(QaccelError):
    pass


class OptionExplosion(QaccelError):
    pass


# --- accelerators ---

class UnsupportedAggregate(QaccelError):
    pass


class StaleState(QaccelError):
    pass


class NonSargable(QaccelError):
    pass


class UnknownGroupValue(QaccelError):
    pass


class BuildFailed(QaccelError):
    pass


# --- models ---

class ShapeMismatch(QaccelError):
    pass


class MissingStatistics(QaccelError):
    pass


# --- bootstrap / planner ---

class ExhaustedRetries(QaccelError):
    pass


class AdapterUnavailable(QaccelError):
    pass


class ImportFailed(QaccelError):
    pass


class StageFailed(QaccelError):
    pass


class ConfigError(QaccelError):
    pass
