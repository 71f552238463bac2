"""Training configuration as a flat key-value file with environment
overrides.

Precedence, lowest to highest: built-in defaults, config file keys,
``SIGIL_<KEY>`` environment variables, explicit command-line flags.
"""

from __future__ import annotations

import os
from dataclasses import fields, replace
from pathlib import Path

from .training import ConfigError, TrainConfig

__all__ = ["ENV_PREFIX", "CONFIG_KEYS", "read_config_file", "resolve_config"]

ENV_PREFIX = "SIGIL_"

# file/flag key -> TrainConfig field
CONFIG_KEYS = {
    "iterations": "iterations",
    "learning_rate": "learning_rate",
    "weight_decay": "weight_decay",
    "hidden": "hidden",
    "clusters": "clusters",
    "lambda": "lambda_",
    "alpha": "alpha",
    "beta": "beta",
    "tau": "tau",
    "pair_sample": "pair_sample",
    "seed": "seed",
    "loss_variant": "loss_variant",
    "normalization": "normalization",
    "log_interval": "log_interval",
    "checkpoint_interval": "checkpoint_interval",
    "augment": "augment",
    "detach_similarity": "detach_similarity",
    "mixture_decode": "mixture_decode",
    "tied_unpooling": "tied_unpooling",
}

_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    field = CONFIG_KEYS[key]
    kind = _FIELD_TYPES[field]
    try:
        if field == "clusters":
            return tuple(int(part) for part in str(raw).split(",") if part.strip())
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            lowered = str(raw).strip().lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return str(raw)
    except ValueError as err:
        raise ConfigError(f"bad value for '{key}': {err}") from err


def read_config_file(path) -> dict[str, object]:
    """Parse ``key = value`` lines; unknown keys are rejected."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    out: dict[str, object] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        out[key] = _coerce(key, value)
    return out


def _env_overrides(environ=None) -> dict[str, object]:
    environ = os.environ if environ is None else environ
    out: dict[str, object] = {}
    for key in CONFIG_KEYS:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            out[key] = _coerce(key, raw)
    return out


def resolve_config(
    file_path=None,
    flag_values: dict[str, object] | None = None,
    environ=None,
) -> TrainConfig:
    """Merge defaults, config file, environment, and flags into a config."""
    merged: dict[str, object] = {}
    if file_path is not None:
        merged.update(read_config_file(file_path))
    merged.update(_env_overrides(environ))
    for key, value in (flag_values or {}).items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key '{key}'")
        merged[key] = _coerce(key, value) if isinstance(value, str) else value
    cfg = replace(
        TrainConfig(), **{CONFIG_KEYS[k]: v for k, v in merged.items()}
    )
    cfg.validate()
    return cfg


def config_as_dict(cfg: TrainConfig) -> dict[str, object]:
    """Flat serializable view using the file/flag key names."""
    out = {}
    for key, field in CONFIG_KEYS.items():
        value = getattr(cfg, field)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out
