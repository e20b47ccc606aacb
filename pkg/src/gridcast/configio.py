"""Flat key-value config files: one ``key = value`` per line, ``#`` comments.

Values are coerced to the target dataclass's field types; unknown keys are
usage errors that name the offending key.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .errors import ConfigError


def parse_kv_text(text: str, where: str = "config") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where} line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_kv(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_kv_text(path.read_text(), where=path.name)


def _coerce(value: str, target, key: str, where: str):
    try:
        if target is bool:
            lowered = value.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if target is int:
            return int(value)
        if target is float:
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}") from exc


def dataclass_from_kv(cls, raw: dict[str, str], where: str = "config"):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"{where}: unknown key {key!r}")
        target = fields[key].type
        if isinstance(target, str):  # postponed annotations store names
            target = {"int": int, "float": float, "bool": bool, "str": str}.get(target, str)
        kwargs[key] = _coerce(value, target, key, where)
    return cls(**kwargs)


def save_kv(path: str | Path, mapping: dict) -> None:
    lines = [f"{key} = {value}" for key, value in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n")
