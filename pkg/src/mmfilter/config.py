"""Flat ``key = value`` config files.

Grammar, one entry per line::

    # comment (also allowed after a value)
    key = value
    noise_prob.acoustic = 1.0     # per-modality entry of a dict field

Blank lines are ignored. Values are coerced to the type of the field's
default: booleans accept true/false, yes/no, on/off, 1/0; strings may be
bare or double-quoted. Unknown keys and repeated keys are errors.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .data import SynthConfig
from .encoders import MODALITIES
from .exceptions import ConfigError
from .model import TrainConfig

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]
        entries[key] = value
    return entries


def read_config(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 text ({exc})") from None
    return parse_text(text, str(path))


def _coerce(key: str, value: str, like):
    if isinstance(like, bool):
        low = value.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(like, (int, float)):
        kind = type(like)
        try:
            return kind(value) if kind is float else int(value)
        except ValueError:
            raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None
    return value


def _build(cls, entries: dict[str, str]):
    defaults = cls()
    kwargs: dict = {}
    for key, value in entries.items():
        name, _, sub = key.partition(".")
        if not hasattr(defaults, name) or name not in {f.name for f in dataclasses.fields(cls)}:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(defaults, name)
        if isinstance(current, dict):
            if sub not in MODALITIES:
                raise ConfigError(f"{key}: {name} needs a modality suffix, one of {MODALITIES}")
            kwargs.setdefault(name, dict(current))[sub] = _coerce(key, value, current[sub])
        elif sub:
            raise ConfigError(f"unknown config key {key!r}")
        else:
            kwargs[name] = _coerce(key, value, current)
    return cls(**kwargs)


def synth_config(entries: dict[str, str], seed: int | None = None) -> SynthConfig:
    cfg = _build(SynthConfig, entries)
    return dataclasses.replace(cfg, seed=seed) if seed is not None else cfg


def train_config(entries: dict[str, str]) -> TrainConfig:
    return _build(TrainConfig, entries)


def dump_config(cfg) -> str:
    """Inverse of the parser for a config dataclass."""
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        items = [(f"{f.name}.{m}", value[m]) for m in MODALITIES] if isinstance(value, dict) else [(f.name, value)]
        for key, v in items:
            lines.append(f"{key} = {str(v).lower() if isinstance(v, bool) else repr(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"
