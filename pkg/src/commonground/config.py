"""Flat key=value configuration with typed coercion.

Config files are plain text, one ``key = value`` per line, ``#`` for
comments.  The same keys are accepted on the command line via repeated
``--set key=value`` flags, which win over file entries.  Unknown keys
are rejected with the list of valid ones.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import get_args, get_origin

from .model import LEVEL_MODES


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Reference training configuration.

    Defaults are the full-scale recipe; benchmarks override the size
    knobs (common_dim, grid_size, batch_size, epochs) downward.
    """

    dataset: str = ""
    batch_size: int = 32
    epochs: int = 20
    learning_rate: float = 0.001
    lr_halving_epochs: tuple[int, ...] = (10, 15)
    common_dim: int = 1024
    grid_size: int = 18
    gamma1: float = 5.0
    gamma2: float = 10.0
    alpha: float = 0.25
    reg_value: float = 0.0005
    seed: int = 0
    levels: str = "multi"
    softmax_attention: bool = False
    linear_text: bool = False
    linear_visual: bool = False
    eq6b_normalized: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.levels not in LEVEL_MODES:
            raise ConfigError(f"levels must be one of {LEVEL_MODES}, got {self.levels!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.batch_size < 1 or self.epochs < 0 or self.common_dim < 1 or self.grid_size < 1:
            raise ConfigError("batch_size, common_dim, grid_size must be positive; epochs >= 0")
        if self.learning_rate <= 0 or self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ConfigError("learning_rate, gamma1, gamma2 must be positive")
        if not 0 <= self.alpha < 1:
            raise ConfigError("alpha must be in [0, 1)")
        if self.reg_value < 0:
            raise ConfigError("reg_value must be non-negative")


def _coerce(name: str, annotation, raw: str):
    if isinstance(raw, str):
        raw = raw.strip()
    if annotation is bool:
        if isinstance(raw, bool):
            return raw
        low = str(raw).lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if annotation is int:
        try:
            return int(str(raw), 10)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from exc
    if annotation is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from exc
    if annotation is str:
        return str(raw)
    if get_origin(annotation) is tuple:
        inner = get_args(annotation)[0]
        text = str(raw).strip()
        if text in ("", "none"):
            return ()
        return tuple(_coerce(name, inner, part) for part in text.split(","))
    raise ConfigError(f"{name}: unsupported config type {annotation}")


def coerce_entries(raw: dict, cls) -> dict:
    """Convert string entries to the field types of dataclass ``cls``."""
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    resolved = {}
    for name, value in raw.items():
        if name not in fields:
            raise ConfigError(
                f"unknown config key {name!r}; valid keys: {', '.join(sorted(fields))}"
            )
        annotation = fields[name]
        if isinstance(annotation, str):
            annotation = _ANNOTATION_CACHE.setdefault(
                (cls, name), _resolve_annotation(cls, name)
            )
        resolved[name] = _coerce(name, annotation, value)
    return resolved


_ANNOTATION_CACHE: dict = {}


def _resolve_annotation(cls, name):
    import typing

    hints = typing.get_type_hints(cls)
    return hints[name]


def parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    key, _, value = text.partition("=")
    key, value = key.strip(), value.strip()
    if not key:
        raise ConfigError(f"expected key=value, got {text!r}")
    return key, value


def load_config_file(path: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                try:
                    key, value = parse_assignment(stripped)
                except ConfigError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
                entries[key] = value
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return entries


def train_config_from_entries(entries: dict) -> TrainConfig:
    return TrainConfig(**coerce_entries(entries, TrainConfig))


def config_lines(cfg) -> str:
    """Serialize a dataclass config as sorted key=value lines."""
    out = []
    for f in sorted(dataclasses.fields(cfg), key=lambda f: f.name):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        out.append(f"{f.name} = {value}")
    return "\n".join(out) + "\n"
