"""Flat ``key = value`` config files mapped onto dataclasses.

Lines are ``key = value`` (or ``key: value``); ``#`` starts a comment.
Sequence-valued keys take comma-separated numbers.  A run manifest (JSON
with a ``"config"`` object) is accepted wherever a config file is.
"""
from __future__ import annotations

import json
from dataclasses import asdict, fields
from pathlib import Path

from .errors import InvalidInputError

ALIASES = {"lambda": "lam"}


def read_config_file(path):
    """Parse a config file (or manifest) into a ``{key: raw value}`` dict."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: bad JSON: {exc}") from None
        return dict(doc.get("config", doc))
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, val = line.split(sep, 1)
                break
        else:
            raise InvalidInputError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip()] = val.strip()
    return out


def _coerce(raw, default, key):
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            if str(raw).lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            return int(f)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = raw if isinstance(raw, (list, tuple)) else [s for s in str(raw).split(",") if s.strip()]
            return tuple(float(s) for s in items)
        if default is None:
            return None if raw in (None, "", "none", "None") else raw
        return str(raw)
    except (TypeError, ValueError):
        raise InvalidInputError(f"bad value {raw!r} for config key {key!r}") from None


def build(cls, *mappings):
    """Instantiate dataclass ``cls`` from defaults overlaid with ``mappings`` in order."""
    defaults = asdict(cls())
    values = {}
    for mapping in mappings:
        for key, raw in mapping.items():
            if raw is None:
                continue
            key = ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
            if key not in defaults:
                raise InvalidInputError(f"unknown config key {key!r} for {cls.__name__}")
            values[key] = _coerce(raw, defaults[key], key)
    return cls(**values)


def field_names(cls):
    return [f.name for f in fields(cls)]
