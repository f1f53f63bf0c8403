"""Strict construction of config dataclasses from parsed JSON."""

from __future__ import annotations

from dataclasses import MISSING, fields

from .exceptions import InvalidConfig


def _type_ok(value, default) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    return True


def from_dict(cls, raw, section: str):
    """Build ``cls`` from ``raw``, rejecting unknown keys and mistyped values.

    Errors are :class:`InvalidConfig` whose ``field`` is ``section.key``.
    """
    if not isinstance(raw, dict):
        raise InvalidConfig(f"{section} must be a JSON object", section)
    known = {f.name: f for f in fields(cls)}
    for key, value in raw.items():
        if key not in known:
            raise InvalidConfig(f"unknown key {key!r} in {section}", f"{section}.{key}")
        default = known[key].default
        if default is not MISSING and default is not None and not _type_ok(value, default):
            raise InvalidConfig(f"{section}.{key} must be {type(default).__name__}, got {value!r}", f"{section}.{key}")
    try:
        return cls(**raw)
    except InvalidConfig as exc:
        if exc.field and not str(exc.field).startswith(section + "."):
            exc.field = f"{section}.{exc.field}"
        raise
