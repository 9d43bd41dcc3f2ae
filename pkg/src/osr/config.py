"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key must be known and is
converted to the type of its default; anything else is a :class:`ConfigError`
that names the offending line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .degrade import DegradationSpec
from .train import TrainConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "format_config"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    blur_sigma: float = 1.6
    noise_sigma: float = math.sqrt(2)
    decimation: int = 1
    kernel_size: int = 25

    def degradation(self) -> DegradationSpec:
        return DegradationSpec.gaussian(self.blur_sigma, self.noise_sigma, self.decimation,
                                        self.kernel_size)

    def to_dict(self) -> dict:
        out = {"blur_sigma": self.blur_sigma, "noise_sigma": self.noise_sigma,
               "decimation": self.decimation, "kernel_size": self.kernel_size}
        out.update(self.train.to_dict())
        return out


_RUN_KEYS = {"blur_sigma": float, "noise_sigma": float, "decimation": int, "kernel_size": int}


def _key_types() -> dict:
    types = {f.name: type(f.default) for f in fields(TrainConfig)}
    types.update(_RUN_KEYS)
    return types


def _convert(raw: str, typ):
    if typ is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if typ is float and raw.lower().startswith("sqrt(") and raw.endswith(")"):
        return math.sqrt(float(raw[5:-1]))
    return typ(raw)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    types = _key_types()
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(raw, types[key])
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    run = {k: values.pop(k) for k in list(values) if k in _RUN_KEYS}
    try:
        return RunConfig(TrainConfig(**values), **run)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
