"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: data/format/config problems exit 2,
numeric failures exit 3 (usage errors exit 1 and are raised by argparse).
"""


class SceneRobustError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(SceneRobustError):
    """A config table or config file is missing or inconsistent."""


class DataError(SceneRobustError):
    """Input data violates a documented contract (schema, range, format)."""


class FormatError(DataError):
    """A binary or text artifact does not match its on-disk format."""


class EmptyCaptionError(DataError):
    """A caption has no valid words left after preprocessing."""


class ContractError(SceneRobustError):
    """An internal call violated a shape or dimension contract."""


class UndefinedMetricError(SceneRobustError):
    """A metric is undefined for the given inputs (e.g. zero denominator)."""


class NumericError(SceneRobustError):
    """Training or evaluation produced non-finite values."""
