"""Severity parameter table: 15 corruption kinds x 5 levels.

The constants ship as a versioned plain-text config (see
``data/severity_config_v1.txt``) so they can be audited and swapped without
touching code.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import ConfigurationError

CORRUPTION_KINDS = (
    "gaussian_noise",
    "shot_noise",
    "impulse_noise",
    "defocus_blur",
    "glass_blur",
    "motion_blur",
    "zoom_blur",
    "snow",
    "frost",
    "fog",
    "brightness",
    "contrast",
    "elastic",
    "pixelate",
    "jpeg",
)

SEVERITY_LEVELS = (1, 2, 3, 4, 5)

# Per kind: the field that tracks distortion strength and its direction
# across levels (+1 non-decreasing, -1 non-increasing).
STRENGTH_FIELDS: dict[str, tuple[str, int]] = {
    "gaussian_noise": ("sigma", +1),
    "shot_noise": ("photons", -1),
    "impulse_noise": ("amount", +1),
    "defocus_blur": ("radius", +1),
    "glass_blur": ("sigma", +1),
    "motion_blur": ("sigma", +1),
    "zoom_blur": ("max_zoom", +1),
    "snow": ("retain", -1),
    "frost": ("retain", -1),
    "fog": ("strength", +1),
    "brightness": ("delta", +1),
    "contrast": ("factor", -1),
    "elastic": ("alpha_frac", +1),
    "pixelate": ("factor", -1),
    "jpeg": ("quality", -1),
}


@dataclass(frozen=True)
class SeverityTable:
    """Parsed parameter rows keyed by (kind, level)."""

    rows: dict[tuple[str, int], dict[str, float]]
    source: str

    def params(self, kind: str, level: int) -> dict[str, float]:
        if kind not in CORRUPTION_KINDS:
            raise ConfigurationError(f"unknown corruption kind {kind!r}")
        if level not in SEVERITY_LEVELS:
            raise ConfigurationError(f"severity level must be in [1, 5], got {level}")
        try:
            return self.rows[(kind, level)]
        except KeyError:
            raise ConfigurationError(
                f"no parameter row for ({kind}, level {level}) in {self.source}"
            ) from None


def _parse_rows(text: str, source: str) -> dict[tuple[str, int], dict[str, float]]:
    rows: dict[tuple[str, int], dict[str, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ConfigurationError(f"{source}:{lineno}: expected `kind level key=value ...`")
        kind, level_text = parts[0], parts[1]
        if kind not in CORRUPTION_KINDS:
            raise ConfigurationError(f"{source}:{lineno}: unknown corruption kind {kind!r}")
        try:
            level = int(level_text)
        except ValueError:
            raise ConfigurationError(f"{source}:{lineno}: bad level {level_text!r}") from None
        if level not in SEVERITY_LEVELS:
            raise ConfigurationError(f"{source}:{lineno}: level {level} outside [1, 5]")
        params: dict[str, float] = {}
        for field in parts[2:]:
            key, sep, value = field.partition("=")
            if not sep:
                raise ConfigurationError(f"{source}:{lineno}: field {field!r} is not key=value")
            try:
                params[key] = float(value)
            except ValueError:
                raise ConfigurationError(f"{source}:{lineno}: bad value in {field!r}") from None
        if (kind, level) in rows:
            raise ConfigurationError(f"{source}:{lineno}: duplicate row for ({kind}, {level})")
        rows[(kind, level)] = params
    return rows


def _validate(rows: dict[tuple[str, int], dict[str, float]], source: str) -> None:
    missing = [
        (kind, level)
        for kind in CORRUPTION_KINDS
        for level in SEVERITY_LEVELS
        if (kind, level) not in rows
    ]
    if missing:
        raise ConfigurationError(f"{source}: missing rows for {missing}")
    for kind in CORRUPTION_KINDS:
        field, direction = STRENGTH_FIELDS[kind]
        values = [rows[(kind, level)][field] for level in SEVERITY_LEVELS]
        ordered = all(
            direction * (b - a) >= 0 for a, b in zip(values, values[1:])
        )
        if not ordered:
            raise ConfigurationError(
                f"{source}: {kind}.{field} must be monotone "
                f"({'non-decreasing' if direction > 0 else 'non-increasing'}), got {values}"
            )


def load_severity_table(path: str | Path | None = None) -> SeverityTable:
    """Load and validate a severity config; ``None`` loads the shipped table."""
    if path is None:
        text = shipped_config_text()
        source = "severity_config_v1.txt (shipped)"
    else:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read severity config {path}: {exc}") from exc
        source = str(path)
    rows = _parse_rows(text, source)
    _validate(rows, source)
    return SeverityTable(rows=rows, source=source)


def shipped_config_text() -> str:
    return (
        resources.files("scene_robust")
        .joinpath("data/severity_config_v1.txt")
        .read_text(encoding="utf-8")
    )
