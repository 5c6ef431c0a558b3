from .engine import apply_corruption, default_severity_table
from .severity import (
    CORRUPTION_KINDS,
    SEVERITY_LEVELS,
    STRENGTH_FIELDS,
    SeverityTable,
    load_severity_table,
    shipped_config_text,
)

__all__ = [
    "apply_corruption",
    "default_severity_table",
    "CORRUPTION_KINDS",
    "SEVERITY_LEVELS",
    "STRENGTH_FIELDS",
    "SeverityTable",
    "load_severity_table",
    "shipped_config_text",
]
