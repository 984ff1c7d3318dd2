"""Plain-text ``key=value`` configuration files."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration content."""


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines. Blank lines and ``#`` comments are ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def read_kv(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_kv(text)


def format_kv(values: Mapping[str, object]) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in values.items())


def write_kv(path: str | Path, values: Mapping[str, object]) -> None:
    Path(path).write_text(format_kv(values))


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def get_int(values: Mapping[str, str], key: str, default: int) -> int:
    if key not in values:
        return default
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected integer, got {values[key]!r}") from None


def get_float(values: Mapping[str, str], key: str, default: float) -> float:
    if key not in values:
        return default
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected number, got {values[key]!r}") from None


def get_str(values: Mapping[str, str], key: str, default: str) -> str:
    return values.get(key, default)
