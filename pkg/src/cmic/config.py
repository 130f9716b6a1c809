"""Flat key = value config files for training runs.

One assignment per line, ``#`` comments, TOML-style scalars and bare lists
("60,120,160" or "[60, 120, 160]"). Every TrainConfig field has a key;
unknown keys are errors so hyper-parameter typos fail fast.
"""
from __future__ import annotations

from typing import Optional, Tuple

from .errors import ConfigError
from .trainer import TrainConfig


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_int_list(raw: str, key: str) -> Tuple[int, ...]:
    inner = raw.strip()
    if inner.startswith("[") and inner.endswith("]"):
        inner = inner[1:-1]
    parts = [p.strip() for p in inner.split(",") if p.strip()]
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected integers, got {raw!r}") from exc


def _parse_optional_float(raw: str, key: str) -> Optional[float]:
    if raw.lower() in ("none", "null", ""):
        return None
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a float or none, got {raw!r}") from exc


#: key -> (TrainConfig attribute, parser)
_KEYS = {
    "mode": ("mode", lambda raw, key: raw.strip('"\'')),
    "lambda": ("lam", lambda raw, key: float(raw)),
    "beta": ("beta", lambda raw, key: float(raw)),
    "epochs": ("epochs", lambda raw, key: int(raw)),
    "batch_size": ("batch_size", lambda raw, key: int(raw)),
    "class_batch_size": ("class_batch_size", lambda raw, key: int(raw)),
    "q_momentum": ("q_momentum", lambda raw, key: float(raw)),
    "q_update_every": ("q_update_every", lambda raw, key: int(raw)),
    "freeze_pairwise_target": ("freeze_pairwise_target", _parse_bool),
    "hidden": ("hidden", _parse_int_list),
    "lr": ("lr", lambda raw, key: float(raw)),
    "momentum": ("momentum", lambda raw, key: float(raw)),
    "weight_decay": ("weight_decay", lambda raw, key: float(raw)),
    "lr_milestones": ("lr_milestones", _parse_int_list),
    "lr_decay": ("lr_decay", lambda raw, key: float(raw)),
    "lr_anneal": ("lr_anneal", _parse_optional_float),
    "seed": ("seed", lambda raw, key: int(raw)),
}


def parse_train_config(path) -> TrainConfig:
    """Read a config file; unset keys keep TrainConfig defaults."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = stripped.split("=", 1)
            key, raw = key.strip(), raw.strip()
            if key not in _KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            attr, parser = _KEYS[key]
            try:
                values[attr] = parser(raw, key)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {key}: {exc}") from exc
    return TrainConfig(**values).validate()


def config_to_dict(config: TrainConfig) -> dict:
    """Resolved config as a plain dict, keyed by the file-format key names."""
    out = {}
    for key, (attr, _) in _KEYS.items():
        value = getattr(config, attr)
        if isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out
