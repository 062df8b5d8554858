"""Flat key=value configuration files with command-line override precedence.

The format is one `key = value` pair per line, `#` comments, blank lines
ignored. Values stay strings until a typed accessor pulls them out; that is
where range and enum mistakes get reported, with the key named.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, ParseError


def parse_flat_config(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError("expected key=value", path=str(path), line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ParseError("empty key", path=str(path), line=lineno)
        out[key] = value.strip()
    return out


def apply_overrides(config: dict[str, str], overrides: Sequence[str]) -> dict[str, str]:
    """Layer `key=value` strings (from CLI flags) over a parsed config."""
    merged = dict(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"override {item!r} has an empty key")
        merged[key] = value.strip()
    return merged


class ConfigView:
    """Typed accessors over a flat string-to-string mapping."""

    def __init__(self, values: dict[str, str]):
        self._values = dict(values)

    def keys(self) -> Iterable[str]:
        return self._values.keys()

    def get_str(self, key: str, default: str | None = None) -> str:
        if key in self._values:
            return self._values[key]
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default

    def get_int(self, key: str, default: int | None = None) -> int:
        if key not in self._values:
            if default is None:
                raise ConfigError(f"missing required config key {key!r}")
            return default
        try:
            return int(self._values[key])
        except ValueError:
            raise ConfigError(f"config key {key!r} needs an integer, got {self._values[key]!r}")

    def get_float(self, key: str, default: float | None = None) -> float:
        if key not in self._values:
            if default is None:
                raise ConfigError(f"missing required config key {key!r}")
            return default
        try:
            return float(self._values[key])
        except ValueError:
            raise ConfigError(f"config key {key!r} needs a number, got {self._values[key]!r}")

    def get_bool(self, key: str, default: bool | None = None) -> bool:
        if key not in self._values:
            if default is None:
                raise ConfigError(f"missing required config key {key!r}")
            return default
        raw = self._values[key].lower()
        if raw in ("true", "1", "yes", "on"):
            return True
        if raw in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r} needs a boolean, got {self._values[key]!r}")

    def get_choice(self, key: str, choices: Sequence[str], default: str | None = None) -> str:
        value = self.get_str(key, default)
        if value not in choices:
            raise ConfigError(
                f"config key {key!r} must be one of {tuple(choices)}, got {value!r}"
            )
        return value
