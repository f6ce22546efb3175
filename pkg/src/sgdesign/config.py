"""Flat ``key = value`` run configs with ``#`` comments."""

from __future__ import annotations

import os
from typing import Callable

from .errors import InputError


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InputError(f"config line {lineno}: empty key")
        if key in out:
            raise InputError(f"config line {lineno}: duplicate key '{key}'")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    with open(os.fspath(path), encoding="utf-8") as fh:
        return parse_config(fh.read())


def dumps_config(values: dict) -> str:
    """Inverse of :func:`parse_config` for scalar and list values (sorted keys)."""
    lines = []
    for k in sorted(values):
        v = values[k]
        if isinstance(v, (list, tuple)):
            v = ",".join(_scalar(x) for x in v)
        else:
            v = _scalar(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def _scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "x".join(_scalar(x) for x in v)
    return str(v)


def to_bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: '{s}'")


def to_floats(s: str) -> list[float]:
    return [float(t) for t in s.split(",") if t.strip()]


def to_pairs(s: str) -> list[tuple[float, float]]:
    """``"100x200, 50x100"`` -> ``[(100.0, 200.0), (50.0, 100.0)]``."""
    out = []
    for tok in s.split(","):
        tok = tok.strip()
        if not tok:
            continue
        parts = tok.lower().split("x")
        if len(parts) != 2:
            raise InputError(f"expected 'AxB', got '{tok}'")
        out.append((float(parts[0]), float(parts[1])))
    return out


class Settings:
    """Typed, defaulted view of a parsed config that rejects unknown keys."""

    def __init__(self, raw: dict[str, str], known: dict[str, tuple[Callable, object]]):
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        self.values = {}
        for key, (conv, default) in known.items():
            if key in raw:
                try:
                    self.values[key] = conv(raw[key])
                except (ValueError, TypeError) as exc:
                    raise InputError(f"config key '{key}': {exc}") from None
            else:
                self.values[key] = default

    def __getitem__(self, key):
        return self.values[key]
