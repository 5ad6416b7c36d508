"""``key=value`` text config files mapped onto frozen dataclasses."""

from __future__ import annotations

import dataclasses
import typing
from pathlib import Path

from .errors import ConfigError, ParseError


def read_kv(path) -> dict[str, tuple[int, str]]:
    """Parse ``key=value`` lines; ``#`` starts a comment. Values keep their line number."""
    out: dict[str, tuple[int, str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ParseError(path, lineno, f"expected key=value, got {line!r}")
            out[key.strip()] = (lineno, value.strip())
    return out


def _convert(tp, text: str):
    origin = typing.get_origin(tp)
    if origin is tuple:
        (inner, *_) = typing.get_args(tp)
        return tuple(_convert(inner, part.strip()) for part in text.split(",") if part.strip())
    if origin is typing.Union or str(origin) == "types.UnionType":
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if text.lower() in ("none", ""):
            return None
        return _convert(args[0], text)
    if tp is bool:
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return tp(text)


def build(cls, values: dict[str, str], source: str = "config", strict: bool = True):
    """Instantiate dataclass ``cls`` from string values, coercing by field type.

    Unknown keys raise :class:`ConfigError` when ``strict``; otherwise they
    are ignored (so one file can serve several consumers).
    """
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(values) - names
    if strict and unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}; valid keys: {sorted(names)}")
    kwargs = {}
    for key, text in values.items():
        if key not in names:
            continue
        try:
            kwargs[key] = _convert(hints[key], text)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key}: {exc}") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def dump(obj) -> str:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def write(obj, path) -> None:
    Path(path).write_text(dump(obj), encoding="utf-8")
