"""Line-oriented ``[section]`` / ``key = value [unit]`` text format.

Used both for the species data file and for run configurations. Every value
remembers the line it came from so errors can point at it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    """Malformed or invalid configuration / data file."""


@dataclass(frozen=True)
class Entry:
    raw: str
    line: int
    source: str

    def where(self) -> str:
        return f"{self.source}:{self.line}"


def parse_sections(text: str, source: str = "<string>") -> dict[str, dict[str, Entry]]:
    """Split ``text`` into ``{section: {key: Entry}}``.

    Keys before the first section header land in section ``""``.
    Duplicate keys or sections are errors.
    """
    out: dict[str, dict[str, Entry]] = {"": {}}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]") or len(stripped) < 3:
                raise ConfigError(f"{source}:{lineno}: malformed section header {line.strip()!r}")
            section = stripped[1:-1].strip()
            if section in out and out[section]:
                raise ConfigError(f"{source}:{lineno}: duplicate section [{section}]")
            out.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out[section]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} in [{section}]")
        out[section][key] = Entry(value, lineno, source)
    return out


def read_sections(path) -> dict[str, dict[str, Entry]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_sections(text, str(path))


# unit -> (dimension, factor to internal unit)
# internal units: angular frequency rad/us (= 2pi x MHz), length um, time us,
# temperature uK, mass kg
TWO_PI = 2.0 * math.pi
UNITS = {
    "MHz": ("frequency", TWO_PI),
    "kHz": ("frequency", TWO_PI * 1e-3),
    "GHz": ("frequency", TWO_PI * 1e3),
    "rad/us": ("frequency", 1.0),
    "um": ("length", 1.0),
    "nm": ("length", 1e-3),
    "us": ("time", 1.0),
    "ns": ("time", 1e-3),
    "ms": ("time", 1e3),
    "uK": ("temperature", 1.0),
    "mK": ("temperature", 1e3),
    "K": ("temperature", 1e6),
    "kg": ("mass", 1.0),
    "u": ("mass", 1.66053906660e-27),
    "cm-1": ("wavenumber", 1.0),
}


def parse_quantity(entry: Entry, dimension: str | None = None) -> float:
    """Parse ``"<number> [unit]"`` into internal units.

    A bare number is taken to already be in the internal unit of
    ``dimension``, except frequencies, where a bare number means cyclic MHz.
    """
    parts = entry.raw.split()
    if not parts or len(parts) > 2:
        raise ConfigError(f"{entry.where()}: expected '<number> [unit]', got {entry.raw!r}")
    try:
        value = float(parts[0])
    except ValueError:
        raise ConfigError(f"{entry.where()}: not a number: {parts[0]!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{entry.where()}: non-finite value {parts[0]!r}")
    if len(parts) == 1:
        if dimension == "frequency":
            return value * TWO_PI
        return value
    unit = parts[1]
    if unit not in UNITS:
        raise ConfigError(f"{entry.where()}: unknown unit {unit!r}")
    dim, factor = UNITS[unit]
    if dimension is not None and dim != dimension:
        raise ConfigError(
            f"{entry.where()}: unit {unit!r} is a {dim}, expected a {dimension}"
        )
    return value * factor


def parse_floats(entry: Entry) -> list[float]:
    try:
        return [float(x) for x in entry.raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{entry.where()}: expected a list of numbers, got {entry.raw!r}") from None
